import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from antedata.errors import DomainError, DowndateError, UnknownGroupError
from antedata.grid import expectation, make_grid
from antedata.models import (
    AR1Model,
    BernoulliModel,
    ConjugateState,
    Dataset,
    GaussianModel,
    PoissonModel,
    beta_state,
    conjugate_downdate,
    conjugate_log_marginal,
    conjugate_to_grid,
    conjugate_update,
    gamma_state,
    gaussian_state,
    loglik_group,
    make_model,
    partition_labels,
    simulate,
)


def ones_zeros(ones, zeros, label="g"):
    return Dataset(np.array([1.0] * ones + [0.0] * zeros), (label,) * (ones + zeros))


# -- loglik_group ------------------------------------------------------------


def test_fair_coin_group():
    d = Dataset(np.array([1.0, 0.0, 1.0, 1.0]), ("a", "a", "a", "b"))
    assert loglik_group(BernoulliModel(), 0.5, d, "a") == pytest.approx(3 * math.log(0.5), abs=1e-14)
    assert loglik_group(BernoulliModel(), 0.5, d, "a") == pytest.approx(-2.0794, abs=1e-4)


def test_two_heads():
    d = Dataset(np.array([1.0, 1.0]), ("g", "g"))
    assert loglik_group(BernoulliModel(), 0.7, d, "g") == pytest.approx(2 * math.log(0.7), abs=1e-14)


def test_unknown_group():
    d = Dataset(np.array([1.0]), ("g",))
    with pytest.raises(UnknownGroupError):
        loglik_group(BernoulliModel(), 0.5, d, "nope")


def test_vectorized_theta():
    d = Dataset(np.array([1.0, 0.0]), ("g", "g"))
    th = np.array([0.2, 0.5, 0.9])
    out = loglik_group(BernoulliModel(), th, d, "g")
    assert np.allclose(out, np.log(th) + np.log1p(-th))


def _ar1_conditional_oracle(model, theta, data, group):
    """log p(y_g | y_rest) from the joint Gaussian via a Schur complement."""
    pos = data.positions
    cov = model.noise_sd**2 / (1 - model.phi**2) * model.phi ** np.abs(pos[:, None] - pos[None, :])
    g = data.mask(group)
    r = ~g
    y = data.values
    if not r.any():
        return stats.multivariate_normal(np.full(g.sum(), theta), cov[np.ix_(g, g)]).logpdf(y[g])
    s_rr_inv = np.linalg.inv(cov[np.ix_(r, r)])
    k = cov[np.ix_(g, r)] @ s_rr_inv
    mu = theta + k @ (y[r] - theta)
    c = cov[np.ix_(g, g)] - k @ cov[np.ix_(r, g)]
    return stats.multivariate_normal(mu, c).logpdf(y[g])


@pytest.mark.parametrize("group", ["g1", "g2", "g3", ("g1", "g3")])
@pytest.mark.parametrize("theta", [-1.0, 0.3, 2.0])
def test_ar1_conditional_matches_joint_gaussian(group, theta):
    model = AR1Model(phi=0.7, noise_sd=1.3)
    data = simulate(model, 0.5, 12, "3 folds", seed=5)
    got = loglik_group(model, theta, data, group)
    assert got == pytest.approx(_ar1_conditional_oracle(model, theta, data, group), abs=1e-9)


def test_ar1_interleaved_groups():
    model = AR1Model(phi=0.6)
    data = simulate(model, 0.0, 10, "random:3", seed=11)
    for g in data.labels:
        assert loglik_group(model, 0.4, data, g) == pytest.approx(
            _ar1_conditional_oracle(model, 0.4, data, g), abs=1e-9
        )


def test_ar1_shortcut_differs():
    model = AR1Model(phi=0.7)
    data = simulate(model, 0.5, 12, "3 folds", seed=5)
    cond = loglik_group(model, 0.3, data, "g2")
    iid = loglik_group(model, 0.3, data, "g2", iid=True)
    assert abs(cond - iid) > 1e-3


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(st.integers(0, 12), min_size=1, max_size=15),
    labels=st.lists(st.sampled_from(["a", "b", "c"]), min_size=15, max_size=15),
    theta=st.floats(0.1, 20.0),
)
def test_iid_group_is_sum_of_points(values, labels, theta):
    n = len(values)
    data = Dataset(np.array(values, dtype=float), tuple(labels[:n]))
    model = PoissonModel()
    for g in data.labels:
        idx = [i for i in range(n) if data.groups[i] == g]
        expected = sum(float(stats.poisson.logpmf(values[i], theta)) for i in idx)
        assert loglik_group(model, theta, data, g) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_bernoulli_rejects_non_binary():
    with pytest.raises(DomainError):
        BernoulliModel().check(Dataset(np.array([0.5]), ("g",)))


def test_poisson_rejects_negative():
    with pytest.raises(DomainError):
        PoissonModel().check(Dataset(np.array([-1.0]), ("g",)))


def test_make_model():
    assert make_model({"name": "gaussian", "noise_sd": 2.0}) == GaussianModel(2.0)
    with pytest.raises(DomainError):
        make_model({"name": "cauchy"})
    with pytest.raises(DomainError):
        make_model({"name": "ar1", "phi": 1.5})


# -- conjugate families ------------------------------------------------------


def test_beta_update():
    s = conjugate_update(beta_state(1, 1), ones_zeros(7, 3))
    assert s.hyperparameters == {"alpha": 8.0, "beta": 4.0}


def test_gaussian_update():
    d = Dataset(np.array([2.0]), ("g",))
    s = conjugate_update(gaussian_state(0.0, 0.01, 1.0), d)
    assert s["precision"] == pytest.approx(1.01, abs=1e-14)
    assert s["mean"] == pytest.approx(2.0 / 1.01, abs=1e-14)


def test_update_with_empty_group():
    s = beta_state(2, 3)
    assert conjugate_update(s, Dataset.empty()) == s


def test_update_rejects_wrong_data():
    with pytest.raises(DomainError):
        conjugate_update(beta_state(1, 1), Dataset(np.array([2.0]), ("g",)))
    with pytest.raises(DomainError):
        conjugate_update(gamma_state(1, 1), Dataset(np.array([1.5]), ("g",)))


def test_beta_downdate():
    data = Dataset(np.array([1, 1, 1, 0, 1, 0.0]), ("x", "x", "x", "x", "y", "y"))
    s = conjugate_downdate(beta_state(8, 4), data, "x")
    assert s.hyperparameters == {"alpha": 5.0, "beta": 3.0}


def test_downdate_empty():
    assert conjugate_downdate(beta_state(8, 4), Dataset.empty()) == beta_state(8, 4)


def test_downdate_past_information():
    with pytest.raises(DowndateError):
        conjugate_downdate(beta_state(1.5, 2), ones_zeros(2, 0))
    with pytest.raises(DowndateError):
        conjugate_downdate(gamma_state(1.0, 0.5), Dataset(np.array([0.0]), ("g",)))


def test_bad_hyperparameters():
    with pytest.raises(DomainError):
        beta_state(0, 1)
    with pytest.raises(DomainError):
        gaussian_state(0, -1)
    with pytest.raises(DomainError):
        ConjugateState("beta-bernoulli", {"alpha": 1.0})


@settings(max_examples=100, deadline=None)
@given(
    a=st.integers(1, 40).map(lambda k: k / 2),
    b=st.integers(1, 40).map(lambda k: k / 2),
    ys=st.lists(st.integers(0, 1), max_size=30),
)
def test_beta_round_trip_exact(a, b, ys):
    data = Dataset(np.array(ys, dtype=float), ("g",) * len(ys))
    s = beta_state(a, b)
    assert conjugate_downdate(conjugate_update(s, data), data) == s


@settings(max_examples=100, deadline=None)
@given(
    shape=st.integers(1, 40).map(lambda k: k / 4),
    rate=st.integers(1, 40).map(lambda k: k / 4),
    ys=st.lists(st.integers(0, 30), max_size=30),
)
def test_gamma_round_trip_exact(shape, rate, ys):
    data = Dataset(np.array(ys, dtype=float), ("g",) * len(ys))
    s = gamma_state(shape, rate)
    assert conjugate_downdate(conjugate_update(s, data), data) == s


@settings(max_examples=100, deadline=None)
@given(
    a=st.floats(0.01, 100),
    b=st.floats(0.01, 100),
    ys=st.lists(st.integers(0, 1), max_size=30),
)
def test_beta_round_trip_general_floats(a, b, ys):
    data = Dataset(np.array(ys, dtype=float), ("g",) * len(ys))
    s = conjugate_downdate(conjugate_update(beta_state(a, b), data), data)
    assert s["alpha"] == pytest.approx(a, rel=1e-12)
    assert s["beta"] == pytest.approx(b, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    mean=st.floats(-10, 10),
    precision=st.floats(0.01, 10),
    ys=st.lists(st.floats(-10, 10), max_size=20),
)
def test_gaussian_round_trip(mean, precision, ys):
    data = Dataset(np.array(ys, dtype=float), ("g",) * len(ys))
    s = conjugate_downdate(conjugate_update(gaussian_state(mean, precision), data), data)
    assert s["precision"] == pytest.approx(precision, rel=1e-10)
    assert s["mean"] == pytest.approx(mean, rel=1e-8, abs=1e-8)


def test_state_json_round_trip():
    s = gaussian_state(1.5, 0.25, 2.0)
    obj = json.loads(s.to_json())
    assert set(obj) == {"family", "hyperparameters"}
    assert ConjugateState.from_json(s.to_json()) == s


@pytest.mark.parametrize(
    "state,data",
    [
        (beta_state(2, 3), ones_zeros(4, 2)),
        (gamma_state(2, 0.5), Dataset(np.array([3.0, 1, 4, 1, 5]), ("g",) * 5)),
        (gaussian_state(0.5, 0.2, 1.7), Dataset(np.array([0.3, -1.2, 2.2]), ("g",) * 3)),
    ],
)
def test_log_marginal_matches_numerical_integral(state, data):
    fam = state.family
    if fam == "beta-bernoulli":
        lik = lambda t: np.prod(stats.bernoulli.pmf(data.values, t))
        pdf = lambda t: stats.beta.pdf(t, state["alpha"], state["beta"])
        lo, hi = 0, 1
    elif fam == "gamma-poisson":
        lik = lambda t: np.prod(stats.poisson.pmf(data.values, t))
        pdf = lambda t: stats.gamma.pdf(t, state["shape"], scale=1 / state["rate"])
        lo, hi = 0, 60
    else:
        sd = math.sqrt(state["noise_var"])
        lik = lambda t: np.prod(stats.norm.pdf(data.values, t, sd))
        pdf = lambda t: stats.norm.pdf(t, state["mean"], 1 / math.sqrt(state["precision"]))
        lo, hi = -30, 30
    val, _ = integrate.quad(lambda t: lik(t) * pdf(t), lo, hi, limit=200, epsabs=0, epsrel=1e-12)
    assert conjugate_log_marginal(state, data) == pytest.approx(math.log(val), abs=1e-8)


def test_to_grid_uniform():
    p = conjugate_to_grid(beta_state(1, 1), make_grid(0, 1, 101))
    assert np.allclose(p.density, 1.0, atol=1e-12)


def test_to_grid_beta_mode():
    g = make_grid(0, 1, 2001)
    p = conjugate_to_grid(beta_state(8, 4), g)
    assert abs(p.argmax() - 0.7) <= g.spacing


def test_to_grid_gaussian_mean():
    p = conjugate_to_grid(gaussian_state(0.0, 1.0), make_grid(-8, 8, 2001))
    assert abs(expectation(lambda t: t, p)) < 1e-8


# -- simulation and partitions -----------------------------------------------


def test_simulate_deterministic():
    a = simulate(BernoulliModel(), 0.5, 10, seed=42)
    b = simulate(BernoulliModel(), 0.5, 10, seed=42)
    assert np.array_equal(a.values, b.values) and a.groups == b.groups
    c = simulate(BernoulliModel(), 0.5, 10, seed=43)
    assert not np.array_equal(a.values, c.values) or a.values.sum() in (0, 10)


def test_five_folds():
    d = simulate(BernoulliModel(), 0.5, 10, "5 folds", seed=0)
    assert d.labels == ("g1", "g2", "g3", "g4", "g5")
    assert all(d.groups.count(g) == 2 for g in d.labels)


def test_theta_one_gives_all_ones():
    assert np.all(simulate(BernoulliModel(), 1.0, 5, seed=3).values == 1)


@pytest.mark.parametrize("spec", ["bogus", "0 folds", "random:11", "folds:-1"])
def test_bad_partition(spec):
    with pytest.raises(DomainError):
        partition_labels(10, spec)


def test_partition_rules():
    assert partition_labels(3, "loo") == ("g1", "g2", "g3")
    assert partition_labels(3, "single") == ("g1",) * 3
    assert partition_labels(5, "folds:2") == ("g1", "g1", "g1", "g2", "g2")
    r = partition_labels(20, "random:4", seed=9)
    assert sorted(r.count(g) for g in set(r)) == [5, 5, 5, 5]
    assert r == partition_labels(20, "random:4", seed=9)


def test_simulate_needs_positive_n():
    with pytest.raises(DomainError):
        simulate(BernoulliModel(), 0.5, 0)


# -- Dataset -------------------------------------------------------------------


def test_dataset_csv_round_trip():
    d = Dataset(np.array([0.1, -2.5, 3.0]), ("a", "b", "a"))
    text = d.to_csv()
    assert text.splitlines()[0] == "value,group"
    e = Dataset.from_csv(text)
    assert np.array_equal(e.values, d.values) and e.groups == d.groups


def test_dataset_label_count_mismatch():
    with pytest.raises(DomainError):
        Dataset(np.array([1.0, 2.0]), ("a",))


def test_subset_keeps_positions():
    d = Dataset(np.arange(6.0), ("a", "b", "a", "b", "a", "b"))
    assert list(d.without("a").positions) == [1, 3, 5]
