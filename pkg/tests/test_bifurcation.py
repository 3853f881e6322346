import numpy as np
import pytest

from bifurnet.bifurcation import (
    SearchConfig,
    expand_grid,
    find_bifurcation,
    grad_f2,
    loss_f2,
    search_box,
    sweep_bifurcation,
)
from bifurnet.datagen import gen_ex1
from bifurnet.errors import DimensionError
from bifurnet.network import MlpNetwork, forward, init_network
from bifurnet.numerics import central_diff, smallest_singular
from bifurnet.problems import ex1_turning, ex2_quadratic, ex3_cubic, ex4_bvp
from bifurnet.training import TrainConfig, train_best_of_k


def relu_identity():
    """u(p) = relu(p): meets x^2 = p only at the turning point p = 0."""
    return MlpNetwork([1, 1, 1], [np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)], "relu")


def half_minus_b():
    """u(b, c) = -b/2 on b > -10, so F_u = 2u + b vanishes everywhere."""
    return MlpNetwork(
        [2, 1, 1], [np.array([[1.0, 0.0]]), np.array([[-0.5]])], [np.array([10.0]), np.array([5.0])], "relu"
    )


def constant_net(d, n, value):
    return MlpNetwork(
        [d, 1, n], [np.zeros((1, d)), np.zeros((n, 1))], [np.zeros(1), np.full(n, float(value))], "sigmoid"
    )


@pytest.fixture(scope="module")
def smooth_ex1_net():
    spec = ex1_turning()
    net, _ = train_best_of_k(gen_ex1(200, 0), spec, TrainConfig(epochs=1500, width=20))
    return net


def test_f2_zero_at_exact_turning_point():
    assert loss_f2(constant_net(1, 1, 0.0), ex1_turning(), [0.0], [0.7], 1.0) == 0.0


def test_f2_zero_at_ex2_double_root():
    assert loss_f2(constant_net(2, 1, -1.0), ex2_quadratic(), [2.0, 1.0], [1.0], 1.0) == 0.0


def test_f2_hand_value():
    # u = 1 at p = 0.5: Rayleigh 4, residual 0.5
    assert loss_f2(constant_net(1, 1, 1.0), ex1_turning(), [0.5], [2.0], 2.0) == pytest.approx(4.0 + 0.25)


def test_f2_argument_errors():
    net = constant_net(1, 1, 0.0)
    with pytest.raises(ValueError):
        loss_f2(net, ex1_turning(), [0.0], [0.0], 1.0)
    with pytest.raises(DimensionError):
        loss_f2(net, ex1_turning(), [0.0, 1.0], [1.0], 1.0)
    with pytest.raises(DimensionError):
        loss_f2(net, ex2_quadratic(), [0.0, 1.0], [1.0], 1.0)


def test_scale_invariance_and_rayleigh_bounds(rng):
    spec = ex4_bvp()
    net = init_network([1, 10, 5], "sigmoid", seed=0)
    for b in net.biases:
        b[:] = rng.normal(size=b.shape)
    for _ in range(25):
        p = rng.uniform(0, 40, 1)
        v = rng.normal(size=5)
        f = loss_f2(net, spec, p, v, 0.0)
        for c in (-1.0, 0.1, 10.0, 3.0):
            assert loss_f2(net, spec, p, c * v, 0.0) == pytest.approx(f, rel=1e-13)
        a = spec.jac_u(forward(net, p), p)
        eig = np.linalg.eigvalsh(a.T @ a)
        assert eig[0] * (1 - 1e-12) <= f <= eig[-1] * (1 + 1e-12)


def test_grad_v_zero_at_eigenvector(rng):
    spec = ex4_bvp()
    net = init_network([1, 6, 5], "sigmoid", seed=2)
    p = np.array([12.0])
    a = spec.jac_u(forward(net, p), p)
    _, vecs = np.linalg.eigh(a.T @ a)
    for k in range(5):
        _, gv = grad_f2(net, spec, p, vecs[:, k], 1.0)
        assert np.max(np.abs(gv)) < 1e-8 * max(1.0, np.abs(a).max() ** 2)


@pytest.mark.parametrize("trial", range(20))
def test_grad_v_matches_fd(trial):
    rng = np.random.default_rng(trial)
    spec = ex3_cubic()
    net = init_network([3, 8, 1], "sigmoid", seed=trial)
    p = rng.uniform(0, 1, 3)
    v = rng.normal(size=1)
    _, gv = grad_f2(net, spec, p, v, 1.0)
    fd = central_diff(lambda w: loss_f2(net, spec, p, w, 1.0), v, 0)
    # Rayleigh quotient is constant in v for n = 1
    assert gv[0] == pytest.approx(fd, abs=1e-9)
    spec4 = ex4_bvp()
    net4 = init_network([1, 8, 5], "sigmoid", seed=trial)
    v4 = rng.normal(size=5)
    p4 = rng.uniform(0, 40, 1)
    _, gv4 = grad_f2(net4, spec4, p4, v4, 1.0)
    fd4 = np.array([central_diff(lambda w: loss_f2(net4, spec4, p4, w, 1.0), v4, i) for i in range(5)])
    assert np.allclose(gv4, fd4, rtol=1e-6, atol=1e-8 * np.abs(fd4).max())


def test_grad_p_richardson(smooth_ex1_net):
    spec = ex1_turning()
    for p in (0.3, 1.0):
        g = [grad_f2(smooth_ex1_net, spec, [p], [1.0], 1.0, h=h)[0][0] for h in (4e-2, 2e-2, 1e-2)]
        assert (g[0] - g[1]) / (g[1] - g[2]) == pytest.approx(4.0, abs=0.05)


def test_search_box_margin():
    box = search_box(ex1_turning(), SearchConfig())
    assert np.allclose(box, [[-0.2, 2.2]])
    assert np.allclose(search_box(ex1_turning(), SearchConfig(box_margin=0.0, p_box=((1.0, 3.0),))), [[1.0, 3.0]])


def test_config_validation():
    for kw in ({"restarts": 0}, {"max_iters": -1}, {"tol_f2": 0}, {"learning_rate": 0}, {"box_margin": -1}):
        with pytest.raises(ValueError):
            SearchConfig(**kw)


def test_finds_exact_turning_point():
    res = find_bifurcation(relu_identity(), ex1_turning(), SearchConfig(seed=0))
    assert res.converged
    assert abs(res.p_star[0]) < 2e-3
    assert res.history.shape == (SearchConfig().max_iters + 1,)
    assert np.all(np.diff(res.history) <= 0)


def test_f2_near_zero_implies_singular_solution():
    res = find_bifurcation(relu_identity(), ex1_turning(), SearchConfig(seed=1))
    assert res.f2_value < 1e-12
    assert res.residual_norm < 1e-6 and res.sigma_min_at_p < 1e-6


def test_search_is_deterministic():
    cfg = SearchConfig(seed=5, max_iters=300)
    a = find_bifurcation(relu_identity(), ex1_turning(), cfg)
    b = find_bifurcation(relu_identity(), ex1_turning(), cfg)
    assert np.array_equal(a.p_star, b.p_star) and a.f2_value == b.f2_value
    assert a.restart_index == b.restart_index


def test_frozen_b_gives_quarter():
    res = find_bifurcation(half_minus_b(), ex2_quadratic(), SearchConfig(seed=0), frozen={"b": 1.0})
    assert res.p_star[0] == 1.0
    assert res.p_star[1] == pytest.approx(0.25, abs=0.01)
    assert res.range_space_ok


def test_sweep_follows_quadratic_curve():
    bs = np.linspace(-1.5, 1.5, 7)
    out = sweep_bifurcation(half_minus_b(), ex2_quadratic(), {"b": bs}, SearchConfig(seed=0, max_iters=3000))
    assert [r.p_star[0] for r in out] == list(bs)
    c = np.array([r.p_star[1] for r in out])
    assert np.max(np.abs(c - bs**2 / 4)) < 0.01


def test_sweep_matches_single_searches():
    cfg = SearchConfig(seed=3, max_iters=200, restarts=4)
    sweep = sweep_bifurcation(half_minus_b(), ex2_quadratic(), {"b": [0.5, 1.0]}, cfg)
    # a node's restarts are seeded by (seed, node index)
    single = find_bifurcation(half_minus_b(), ex2_quadratic(), cfg, frozen={"b": 0.5})
    assert np.array_equal(sweep[0].p_star, single.p_star)


def test_expand_grid_order():
    assert expand_grid({"b": [1, 2], "eta": [3, 4]}) == [
        {"b": 1, "eta": 3},
        {"b": 1, "eta": 4},
        {"b": 2, "eta": 3},
        {"b": 2, "eta": 4},
    ]
    assert expand_grid([{"b": 1}]) == [{"b": 1}]


def test_unknown_frozen_name():
    with pytest.raises(KeyError):
        find_bifurcation(half_minus_b(), ex2_quadratic(), SearchConfig(max_iters=1), frozen={"q": 1.0})


def test_network_problem_mismatch():
    with pytest.raises(DimensionError):
        find_bifurcation(relu_identity(), ex2_quadratic(), SearchConfig(max_iters=1))


def test_initial_direction_is_smallest_singular_vector():
    net = init_network([1, 6, 5], "sigmoid", seed=0)
    spec = ex4_bvp()
    res = find_bifurcation(net, spec, SearchConfig(max_iters=0, restarts=1, seed=0))
    _, v = smallest_singular(spec.jac_u(forward(net, res.p_star), res.p_star))
    assert abs(abs(v @ res.v_star) - 1.0) < 1e-10
