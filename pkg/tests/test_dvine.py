import numpy as np
import pytest
from scipy import stats

from vineshap import (Block, ClaytonCopula, DVineModel, EmpiricalMarginal,
                      FixedMode, GaussianCopula, IndependenceCopula,
                      InvalidInputError, ParametricMode,
                      UnsupportedBlockError, UnsupportedCoalitionError,
                      fit_dvine, pseudo_observations)


def gaussian_vine(rhos, m=3, n_marg=100, seed=0):
    """All-Gaussian-pair D-vine with the identity order."""
    rng = np.random.default_rng(seed)
    marginals = [EmpiricalMarginal(rng.normal(size=n_marg)) for _ in range(m)]
    pairs, k = [], 0
    for i in range(m - 1):
        row = []
        for _ in range(m - 1 - i):
            row.append(GaussianCopula(rhos[k]))
            k += 1
        pairs.append(row)
    return DVineModel(tuple(range(m)), pairs, marginals)


def trivariate_gaussian_copula_logpdf(u, r12, r23, r13):
    z = stats.norm.ppf(u)
    R = np.array([[1, r12, r13], [r12, 1, r23], [r13, r23, 1]])
    mvn = stats.multivariate_normal(mean=np.zeros(3), cov=R)
    return mvn.logpdf(z) - np.sum(stats.norm.logpdf(z), axis=-1)


def partial_to_plain(r12, r23, r13_2):
    return r13_2 * np.sqrt((1 - r12 ** 2) * (1 - r23 ** 2)) + r12 * r23


# ----------------------------------------------------------------------
# construction and densities

def test_invalid_order_rejected():
    m = [EmpiricalMarginal([0.0, 1.0]) for _ in range(2)]
    with pytest.raises(InvalidInputError):
        DVineModel((0, 0), [[IndependenceCopula()]], m)


def test_pair_table_shape_checked():
    m = [EmpiricalMarginal([0.0, 1.0]) for _ in range(3)]
    with pytest.raises(InvalidInputError):
        DVineModel((0, 1, 2), [[IndependenceCopula()]], m)


def test_all_independence_log_density_zero_any_order():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(100, 4))
    for order in [(0, 1, 2, 3), (2, 0, 3, 1)]:
        model = fit_dvine(data, order, FixedMode(IndependenceCopula()))
        u = rng.uniform(0.05, 0.95, size=(50, 4))
        assert np.allclose(model.copula_log_density(u), 0.0, atol=0)


def test_m2_density_is_single_pair():
    pc = GaussianCopula(0.5)
    marg = [EmpiricalMarginal([0.0, 1.0, 2.0]) for _ in range(2)]
    model = DVineModel((0, 1), [[pc]], marg)
    u = np.random.default_rng(2).uniform(0.05, 0.95, size=(20, 2))
    assert np.allclose(model.copula_log_density(u),
                       pc.log_density(u[:, 0], u[:, 1]), atol=1e-14)


def test_m3_gaussian_matches_trivariate_closed_form():
    r12, r23, r13_2 = 0.5, -0.3, 0.4
    model = gaussian_vine([r12, r23, r13_2])
    r13 = partial_to_plain(r12, r23, r13_2)
    u = np.random.default_rng(3).uniform(0.02, 0.98, size=(1000, 3))
    got = model.copula_log_density(u)
    want = trivariate_gaussian_copula_logpdf(u, r12, r23, r13)
    assert np.max(np.abs(got - want)) < 1e-8


def test_marginal_block_length_one_is_uniform():
    model = gaussian_vine([0.5, -0.3, 0.4])
    assert model.marginal_copula_log_density(Block(1, 1), [[0.3]]) == 0.0


def test_marginal_full_block_equals_joint():
    model = gaussian_vine([0.5, -0.3, 0.4])
    u = np.random.default_rng(4).uniform(0.05, 0.95, size=(100, 3))
    joint = model.copula_log_density(u)
    block = model.marginal_copula_log_density(Block(0, 2), u[:, model.order])
    assert np.allclose(joint, block, atol=0)


def test_marginal_pair_block_is_bivariate_gaussian():
    r12 = 0.5
    model = gaussian_vine([r12, -0.3, 0.4])
    pc = GaussianCopula(r12)
    u = np.random.default_rng(5).uniform(0.05, 0.95, size=(50, 2))
    got = model.marginal_copula_log_density(Block(0, 1), u)
    assert np.allclose(got, pc.log_density(u[:, 0], u[:, 1]), atol=1e-10)


def test_block_for_rejects_non_contiguous():
    model = gaussian_vine([0.5, -0.3, 0.4])
    with pytest.raises(UnsupportedBlockError):
        model.block_for({0, 2})
    assert model.block_for({1, 2}) == Block(1, 2)


# ----------------------------------------------------------------------
# fitting

def test_fit_m2_reduces_to_single_parametric_fit():
    rng = np.random.default_rng(6)
    c = ClaytonCopula(2.0)
    v = rng.uniform(size=1000)
    u = c.hinv(rng.uniform(size=1000), v, "second")
    data = np.column_stack([stats.norm.ppf(u), stats.norm.ppf(v)])
    model = fit_dvine(data, (0, 1), ParametricMode())
    assert len(model.pairs) == 1 and len(model.pairs[0]) == 1
    from vineshap.bicop import fit_parametric
    direct = fit_parametric(pseudo_observations(data, model.marginals))
    assert type(model.pairs[0][0]) is type(direct)


def test_fit_requires_30_rows():
    rng = np.random.default_rng(7)
    with pytest.raises(InvalidInputError):
        fit_dvine(rng.normal(size=(20, 3)), (0, 1, 2), ParametricMode())


def test_fit_recovers_partial_correlation():
    r12, r23, r13_2 = 0.6, 0.5, 0.4
    r13 = partial_to_plain(r12, r23, r13_2)
    R = np.array([[1, r12, r13], [r12, 1, r23], [r13, r23, 1]])
    rng = np.random.default_rng(8)
    data = rng.multivariate_normal(np.zeros(3), R, size=5000)
    model = fit_dvine(data, (0, 1, 2), ParametricMode())
    tree2 = model.pairs[1][0]
    assert isinstance(tree2, GaussianCopula)
    assert abs(tree2.rho - r13_2) < 0.05


# ----------------------------------------------------------------------
# Rosenblatt transform

def test_rosenblatt_independence_is_permuted_identity():
    rng = np.random.default_rng(9)
    data = rng.normal(size=(100, 3))
    model = fit_dvine(data, (2, 0, 1), FixedMode(IndependenceCopula()))
    u = rng.uniform(0.05, 0.95, size=(20, 3))
    w = model.rosenblatt(u)
    assert np.allclose(w, u[:, (2, 0, 1)], atol=0)


def test_rosenblatt_m2_is_hfunc():
    pc = GaussianCopula(0.7)
    marg = [EmpiricalMarginal([0.0, 1.0]) for _ in range(2)]
    model = DVineModel((0, 1), [[pc]], marg)
    u = np.random.default_rng(10).uniform(0.05, 0.95, size=(30, 2))
    w = model.rosenblatt(u)
    assert np.allclose(w[:, 0], u[:, 0], atol=0)
    assert np.allclose(w[:, 1], pc.hfunc(u[:, 1], u[:, 0], "second"), atol=0)


@pytest.mark.parametrize("m", [2, 3, 5])
def test_inverse_rosenblatt_roundtrip(m):
    rng = np.random.default_rng(11)
    rhos = rng.uniform(-0.7, 0.7, size=m * (m - 1) // 2)
    model = gaussian_vine(rhos, m=m)
    w = rng.uniform(0.01, 0.99, size=(100, m))
    u = model.inverse_rosenblatt(w)
    back = model.rosenblatt(u)
    assert np.max(np.abs(back - w)) < 1e-8


def test_rosenblatt_uniformity_of_model_samples():
    rng = np.random.default_rng(42)
    model = gaussian_vine([0.6, 0.5, 0.4])
    w = rng.uniform(size=(2000, 3))
    u = model.inverse_rosenblatt(w)
    t = model.rosenblatt(u)
    for k in range(3):
        counts, _ = np.histogram(t[:, k], bins=20, range=(0, 1))
        chi2 = np.sum((counts - 100.0) ** 2 / 100.0)
        assert chi2 < stats.chi2.ppf(0.99, df=19)


def test_simulated_samples_match_model_taus():
    rng = np.random.default_rng(13)
    model = gaussian_vine([0.6, 0.5, 0.0], seed=13)
    w = rng.uniform(size=(10000, 3))
    u = model.inverse_rosenblatt(w)
    tau01 = stats.kendalltau(u[:, 0], u[:, 1]).statistic
    tau12 = stats.kendalltau(u[:, 1], u[:, 2]).statistic
    assert abs(tau01 - 2 / np.pi * np.arcsin(0.6)) < 0.03
    assert abs(tau12 - 2 / np.pi * np.arcsin(0.5)) < 0.03


# ----------------------------------------------------------------------
# conditional sampling

def test_conditional_sample_independence_ignores_conditioning():
    rng = np.random.default_rng(14)
    data = rng.normal(size=(500, 3))
    model = fit_dvine(data, (0, 1, 2), FixedMode(IndependenceCopula()))
    x_star = np.array([10.0, 0.0, 0.0])
    x = model.conditional_sample({0}, x_star, 4000, np.random.default_rng(15))
    assert np.all(x[:, 0] == 10.0)
    # complement columns are plain draws from the marginals
    ks = stats.ks_2samp(x[:, 1], data[:, 1])
    assert ks.pvalue > 0.01


def test_conditional_sample_m2_gaussian_oracle():
    rho = 0.7
    rng = np.random.default_rng(16)
    z = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=4000)
    model = fit_dvine(z, (0, 1), FixedMode(GaussianCopula(rho)))
    x_star = np.array([1.2, 0.0])
    x = model.conditional_sample({0}, x_star, 10000, np.random.default_rng(17))
    u1 = model.marginals[0].cdf(x_star[0])
    scores = stats.norm.ppf(np.clip(model.marginals[1].cdf(x[:, 1]), 1e-9, 1 - 1e-9))
    want_mean = rho * stats.norm.ppf(u1)
    assert abs(np.mean(scores) - want_mean) < 0.05
    assert abs(np.var(scores) - (1 - rho * rho)) < 0.05


def test_conditional_sample_prefix_vs_suffix_same_distribution():
    # exchangeable fixed model: conditioning on the order prefix or on the
    # suffix of the reversed role must give the same conditional law
    rng = np.random.default_rng(18)
    data = rng.normal(size=(500, 3))
    model = fit_dvine(data, (0, 1, 2), FixedMode(GaussianCopula(0.6)))
    x_star = np.array([0.5, 0.0, 0.5])
    a = model.conditional_sample({0}, x_star, 5000, np.random.default_rng(19))
    b = model.conditional_sample({2}, x_star, 5000, np.random.default_rng(20))
    ks = stats.ks_2samp(a[:, 1], b[:, 1])
    assert ks.pvalue > 0.01


def test_conditional_sample_rejects_middle_coalition():
    model = gaussian_vine([0.5, 0.5, 0.5])
    with pytest.raises(UnsupportedCoalitionError):
        model.conditional_sample({1}, np.zeros(3), 10, np.random.default_rng(0))


def test_coalition_role():
    model = gaussian_vine([0.5, 0.5, 0.5])  # order (0, 1, 2)
    assert model.coalition_role({0}) == "prefix"
    assert model.coalition_role({0, 1}) == "prefix"
    assert model.coalition_role({2}) == "suffix"
    assert model.coalition_role({1}) is None
    assert model.coalition_role({0, 1, 2}) is None


def test_reversed_model_same_density():
    model = gaussian_vine([0.5, -0.3, 0.4])
    rev = model.reversed()
    u = np.random.default_rng(21).uniform(0.05, 0.95, size=(100, 3))
    assert np.allclose(model.copula_log_density(u), rev.copula_log_density(u),
                       atol=1e-10)


# ----------------------------------------------------------------------
# serialization

def test_serialization_bit_exact():
    rng = np.random.default_rng(22)
    data = rng.multivariate_normal(
        np.zeros(3), [[1, .5, .3], [.5, 1, .5], [.3, .5, 1]], size=200)
    model = fit_dvine(data, (1, 0, 2), ParametricMode())
    model2 = DVineModel.from_dict(model.to_dict())
    u = rng.uniform(0.05, 0.95, size=(50, 3))
    assert np.array_equal(model.copula_log_density(u),
                          model2.copula_log_density(u))
    assert model2.order == model.order


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(23)
    data = rng.normal(size=(100, 2))
    model = fit_dvine(data, (0, 1), ParametricMode())
    path = tmp_path / "model.json"
    model.save(path)
    model2 = DVineModel.load(path)
    u = rng.uniform(0.05, 0.95, size=(20, 2))
    assert np.array_equal(model.copula_log_density(u),
                          model2.copula_log_density(u))
