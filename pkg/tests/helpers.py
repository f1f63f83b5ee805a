import numpy as np

from cotrain.data import SplitSpec, make_bundles, split, two_moons
from cotrain.nn_core import init_view
from cotrain.trainer import members_for


def small_problem(n=200, n_labeled=10, n_views=2, batch_size=20, seed=0, dims=(2, 8, 2), hp=None):
    data = two_moons(n, 0.1, seed=seed)
    sup, unl = split(data, SplitSpec(n_labeled, seed))
    views = [init_view(list(dims), 100 + i) for i in range(n_views)]
    members = members_for(views, hp) if hp is not None else None
    bundles = make_bundles(sup, unl, n_views, batch_size, seed)
    return data, sup, unl, views, members, bundles


def params_bytes(members):
    return [m.model.flat_parameters().tobytes() for m in members]


def random_small_mlp_dims(rng, max_params=100):
    """Random layer dims with at most ``max_params`` weights and biases."""
    while True:
        k = int(rng.integers(2, 4))
        hidden = [int(h) for h in rng.integers(2, 7, size=int(rng.integers(1, 3)))]
        dims = [2, *hidden, k]
        if sum(o * i + o for i, o in zip(dims, dims[1:])) <= max_params:
            return dims


def gradient_check(seed, lambdas=(10.0, 0.5), epsilon=0.05, h=1e-5):
    """Max relative error of analytic vs central-difference gradients for sup, cot, dif and total.

    Adversarial inputs and the clean dif targets are held fixed, matching the
    gradient contract of the dif term.
    """
    from cotrain.adversarial import fgsm
    from cotrain.data import Batch
    from cotrain.trainer import compute_losses
    from oracles import central_differences, co_training_terms, max_relative_error, mlp_probs

    rng = np.random.default_rng(seed)
    dims = random_small_mlp_dims(rng)
    k = dims[-1]
    va, vb = init_view(dims, 2 * seed), init_view(dims, 2 * seed + 1)
    # random biases keep relu inputs off the kink at exactly zero
    for layer in va.layers + vb.layers:
        layer.bias.data[:] = rng.normal(0.0, 0.3, size=layer.bias.data.shape)
    x_u = rng.uniform(0.1, 0.9, size=(4, 2))
    ba = Batch(rng.uniform(0.1, 0.9, size=(3, 2)), rng.integers(0, k, 3), x_u)
    bb = Batch(rng.uniform(0.1, 0.9, size=(3, 2)), rng.integers(0, k, 3), x_u)
    unl = np.full(len(x_u), -1)
    xa, xb = np.vstack([ba.x_s, x_u]), np.vstack([bb.x_s, x_u])
    adv_a = fgsm(va, xa, np.r_[ba.y_s, unl], epsilon).x_adv
    adv_b = fgsm(vb, xb, np.r_[bb.y_s, unl], epsilon).x_adv
    ta, tb = mlp_probs(va, xa), mlp_probs(vb, xb)
    lc, ld = lambdas

    def oracle(term):
        if term != "total":
            return co_training_terms(va, vb, ba, bb, adv_a, adv_b, ta, tb, (term,))[term]
        t = co_training_terms(va, vb, ba, bb, adv_a, adv_b, ta, tb)
        return t["sup"] + lc * t["cot"] + ld * t["dif"]

    params = [p for v in (va, vb) for p in v.parameters()]
    errors = {}
    for term in ("sup", "cot", "dif", "total"):
        va.zero_grad()
        vb.zero_grad()
        l_sup, l_cot, l_dif = compute_losses(va, vb, (ba, bb), epsilon)
        loss = {"sup": l_sup, "cot": l_cot, "dif": l_dif,
                "total": l_sup + l_cot * lc + l_dif * ld}[term]
        assert abs(float(loss.data) - float(oracle(term))) < 1e-12
        loss.backward()
        analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
        numeric = central_differences(lambda: oracle(term), [p.data for p in params], h)
        errors[term] = max_relative_error(analytic, numeric)
    return dims, errors
