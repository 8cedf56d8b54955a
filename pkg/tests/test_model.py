import numpy as np
import pytest

from addfit import (
    AdditiveModel,
    MatrixNumerator,
    ModalSpec,
    ParameterVector,
    ScalarDenominator,
    SingularityError,
    StructureError,
    Submodel,
    check_stability,
    eval_model,
    eval_submodel,
    modal_to_submodel,
    model_from_json,
    model_to_json,
    pack_parameters,
    scale_frequency,
    submodel_to_modal,
    unpack_parameters,
    validate_structure,
)
from conftest import random_model

SISO_FIRST_ORDER = Submodel(
    ell=0,
    den=ScalarDenominator([1.0]),
    num=MatrixNumerator(np.ones((1, 1, 1))),
)


def modal_model(freqs, zetas, n_y=1, n_u=1, seed=0):
    rng = np.random.default_rng(seed)
    subs = tuple(
        modal_to_submodel(ModalSpec(omega=w, zeta=z, residue=rng.standard_normal((n_y, n_u))))
        for w, z in zip(freqs, zetas)
    )
    return AdditiveModel(submodels=subs)


# ---------------------------------------------------------------------------
# evaluation


def test_eval_first_order():
    # 1/(1+s) at omega=1
    val = eval_submodel(SISO_FIRST_ORDER, 1.0)
    assert val == pytest.approx(np.array([[0.5 - 0.5j]]))


def test_eval_double_integrator():
    sub = Submodel(
        ell=2, den=ScalarDenominator(np.zeros(0)), num=MatrixNumerator(np.ones((1, 1, 1)))
    )
    assert eval_submodel(sub, 1.0) == pytest.approx(np.array([[-1.0 + 0j]]))


def test_eval_modal_resonance():
    # residue/(s^2/w0^2 + 2 z s/w0 + 1) at the natural frequency: A(j w0) = 2 z j
    sub = modal_to_submodel(ModalSpec(omega=10.0, zeta=0.01, residue=[[2.0]]))
    assert eval_submodel(sub, 10.0) == pytest.approx(np.array([[-100.0j]]), rel=1e-12)


def test_eval_at_origin_with_integrator_raises():
    sub = Submodel(
        ell=2, den=ScalarDenominator(np.zeros(0)), num=MatrixNumerator(np.ones((1, 1, 1)))
    )
    with pytest.raises(SingularityError):
        eval_submodel(sub, 0.0)


def test_eval_model_single_submodel():
    model = AdditiveModel(submodels=(SISO_FIRST_ORDER,))
    w = np.array([0.3, 1.0, 4.5])
    assert np.allclose(eval_model(model, w), eval_submodel(SISO_FIRST_ORDER, w))


def test_eval_model_dc_gains_add():
    two = Submodel(
        ell=0, den=ScalarDenominator([2.0]), num=MatrixNumerator(np.ones((1, 1, 1)))
    )
    model = AdditiveModel(submodels=(SISO_FIRST_ORDER, two))
    assert eval_model(model, 0.0) == pytest.approx(np.array([[2.0 + 0j]]))


def test_eval_model_sums_submodels(rng):
    model = random_model(rng, K=3, n_y=2, n_u=2, with_integrator=True)
    w = np.array([0.17, 0.9, 3.3])
    expected = sum(eval_submodel(sub, w) for sub in model.submodels)
    assert np.allclose(eval_model(model, w), expected, rtol=1e-12)


def test_eval_model_array_and_scalar_agree(rng):
    model = random_model(rng, K=2, n_y=2, n_u=1)
    w = np.array([0.2, 1.7])
    arr = eval_model(model, w)
    assert np.allclose(arr[0], eval_model(model, 0.2))
    assert np.allclose(arr[1], eval_model(model, 1.7))


def test_conjugate_symmetry(rng):
    for _ in range(10):
        model = random_model(rng)
        w = float(rng.uniform(0.1, 5.0))
        assert np.allclose(
            eval_model(model, -w), np.conj(eval_model(model, w)), rtol=1e-12
        )


def test_numerator_linearity(rng):
    """With fixed denominators the response is linear in the numerators."""
    model_b = random_model(rng, K=2, n_y=2, n_u=2, with_integrator=False)
    alpha, gamma = 1.7, -0.4
    subs_c, subs_mix = [], []
    for sub in model_b.submodels:
        C = rng.standard_normal(sub.num.coeffs.shape)
        subs_c.append(Submodel(ell=sub.ell, den=sub.den, num=MatrixNumerator(C)))
        subs_mix.append(
            Submodel(
                ell=sub.ell,
                den=sub.den,
                num=MatrixNumerator(alpha * sub.num.coeffs + gamma * C),
            )
        )
    model_c = AdditiveModel(submodels=tuple(subs_c))
    model_mix = AdditiveModel(submodels=tuple(subs_mix))
    w = np.geomspace(0.1, 5, 7)
    lhs = eval_model(model_mix, w)
    rhs = alpha * eval_model(model_b, w) + gamma * eval_model(model_c, w)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


# ---------------------------------------------------------------------------
# packing


def test_pack_first_order_readoff():
    sub = Submodel(
        ell=0, den=ScalarDenominator([3.0]), num=MatrixNumerator(5.0 * np.ones((1, 1, 1)))
    )
    beta = pack_parameters(AdditiveModel(submodels=(sub,)))
    assert beta.entries.tolist() == [3.0, 5.0]


def test_pack_vec_is_column_major():
    B0 = np.array([[1.0, 3.0], [2.0, 4.0]])
    sub = Submodel(
        ell=0, den=ScalarDenominator(np.zeros(0)), num=MatrixNumerator(B0[None])
    )
    beta = pack_parameters(AdditiveModel(submodels=(sub,)))
    assert beta.entries.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_pack_unpack_roundtrip_randomized(rng):
    for _ in range(50):
        model = random_model(rng)
        beta = pack_parameters(model)
        back = unpack_parameters(beta)
        assert back.structure == model.structure
        for s1, s2 in zip(model.submodels, back.submodels):
            assert s1.ell == s2.ell
            assert np.array_equal(s1.den.coeffs, s2.den.coeffs)
            assert np.array_equal(s1.num.coeffs, s2.num.coeffs)


def test_parameter_vector_length_mismatch(rng):
    model = random_model(rng, K=2)
    st = model.structure
    with pytest.raises(StructureError):
        ParameterVector(entries=np.zeros(st.n_beta + 1), structure=st)


# ---------------------------------------------------------------------------
# modal conversions


def test_modal_to_submodel_coefficients():
    sub = modal_to_submodel(ModalSpec(omega=1.0, zeta=0.5, residue=[[1.0]]))
    assert sub.den.coeffs == pytest.approx([1.0, 1.0])
    sub = modal_to_submodel(ModalSpec(omega=10.0, zeta=0.01, residue=[[1.0]]))
    assert sub.den.coeffs == pytest.approx([0.002, 0.01])


def test_modal_roundtrip_over_parameter_ranges():
    for omega in np.geomspace(1e-2, 1e5, 8):
        for zeta in np.geomspace(0.001, 0.99, 8):
            spec = ModalSpec(omega=omega, zeta=zeta, residue=[[2.0, -1.0]])
            back = submodel_to_modal(modal_to_submodel(spec))
            assert back.omega == pytest.approx(omega, rel=1e-10)
            assert back.zeta == pytest.approx(zeta, rel=1e-10)
            assert np.allclose(back.residue, spec.residue)


def test_modal_spec_rejects_bad_parameters():
    with pytest.raises(ValueError):
        ModalSpec(omega=-1.0, zeta=0.1, residue=[[1.0]])
    with pytest.raises(ValueError):
        ModalSpec(omega=1.0, zeta=1.5, residue=[[1.0]])


def test_submodel_to_modal_rejects_non_modal():
    overdamped = Submodel(
        ell=0, den=ScalarDenominator([3.0, 1.0]), num=MatrixNumerator(np.ones((1, 1, 1)))
    )  # roots are real
    with pytest.raises(StructureError):
        submodel_to_modal(overdamped)
    with pytest.raises(StructureError):
        submodel_to_modal(SISO_FIRST_ORDER)  # degree 1


# ---------------------------------------------------------------------------
# validation and stability


def test_validate_flags_multiple_integrators():
    sub = Submodel(
        ell=2, den=ScalarDenominator(np.zeros(0)), num=MatrixNumerator(np.ones((1, 1, 1)))
    )
    sub2 = Submodel(
        ell=1, den=ScalarDenominator(np.zeros(0)), num=MatrixNumerator(2 * np.ones((1, 1, 1)))
    )
    report = validate_structure(AdditiveModel(submodels=(sub, sub2)))
    assert not report.ok
    assert any("integrator" in v for v in report.violations)


def test_validate_flags_shared_roots():
    report = validate_structure(AdditiveModel(submodels=(SISO_FIRST_ORDER, SISO_FIRST_ORDER)))
    assert any("shared denominator roots" in v for v in report.violations)


def test_validate_flags_multiple_biproper():
    bip = Submodel(
        ell=0,
        den=ScalarDenominator([1.0]),
        num=MatrixNumerator(np.array([[[1.0]], [[2.0]]])),  # degree 1 = degree of A
    )
    bip2 = Submodel(
        ell=0,
        den=ScalarDenominator([0.5]),
        num=MatrixNumerator(np.array([[[1.0]], [[0.5]]])),
    )
    report = validate_structure(AdditiveModel(submodels=(bip, bip2)))
    assert any("biproper" in v for v in report.violations)


def test_validate_flags_common_root():
    # A = 1 + s, B(s) = 1 + s share the root -1
    sub = Submodel(
        ell=0,
        den=ScalarDenominator([1.0]),
        num=MatrixNumerator(np.array([[[1.0]], [[1.0]]])),
    )
    report = validate_structure(AdditiveModel(submodels=(sub,)))
    assert any("common numerator/denominator root" in v for v in report.violations)


def test_validate_clean_modal_system():
    model = modal_model([1.0, 3.5, 12.0], [0.01, 0.05, 0.2], n_y=2, n_u=2)
    assert validate_structure(model).ok


def test_dimension_mismatch_rejected_at_construction():
    other = Submodel(
        ell=0, den=ScalarDenominator([1.0]), num=MatrixNumerator(np.ones((1, 2, 1)))
    )
    with pytest.raises(StructureError):
        AdditiveModel(submodels=(SISO_FIRST_ORDER, other))


def test_check_stability_simple():
    stable, roots = check_stability(ScalarDenominator([1.0]))
    assert stable and roots == pytest.approx([-1.0])
    stable, roots = check_stability(ScalarDenominator([-1.0]))
    assert not stable and roots == pytest.approx([1.0])


def test_check_stability_quadratic_against_formula():
    a1, a2 = 0.002, 0.01
    stable, roots = check_stability(ScalarDenominator([a1, a2]))
    # quadratic formula on a2 s^2 + a1 s + 1
    disc = a1**2 - 4 * a2
    expected = np.array(
        [(-a1 + 1j * np.sqrt(-disc)) / (2 * a2), (-a1 - 1j * np.sqrt(-disc)) / (2 * a2)]
    )
    assert stable
    assert np.allclose(sorted(roots, key=np.imag), sorted(expected, key=np.imag), rtol=1e-10)
    assert roots.real == pytest.approx([-0.1, -0.1])


def test_check_stability_degree_zero():
    stable, roots = check_stability(ScalarDenominator(np.zeros(0)))
    assert stable and roots.size == 0


def test_denominator_invariants():
    with pytest.raises(ValueError):
        ScalarDenominator([1.0, 0.0])  # zero leading coefficient
    with pytest.raises(ValueError):
        MatrixNumerator(np.array([[[1.0]], [[0.0]]]))  # zero leading matrix


# ---------------------------------------------------------------------------
# frequency scaling and serialization


def test_scale_frequency_evaluates_consistently(rng):
    model = random_model(rng, K=3, with_integrator=True)
    c = 37.0
    scaled = scale_frequency(model, c)
    w = np.geomspace(0.01, 2.0, 9)
    assert np.allclose(eval_model(scaled, w), eval_model(model, c * w), rtol=1e-10)
    back = scale_frequency(scaled, 1.0 / c)
    assert np.allclose(
        pack_parameters(back).entries, pack_parameters(model).entries, rtol=1e-12
    )


def test_json_roundtrip(rng, tmp_path):
    from addfit import load_model, save_model

    model = random_model(rng, K=3, n_y=2, n_u=3, with_integrator=True)
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    assert np.array_equal(pack_parameters(back).entries, pack_parameters(model).entries)
    assert back.structure == model.structure
    # deterministic bytes
    save_model(back, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_model_from_json_rejects_garbage():
    with pytest.raises(StructureError):
        model_from_json({"n_u": 1})
    doc = model_to_json(AdditiveModel(submodels=(SISO_FIRST_ORDER,)))
    doc["submodels"][0]["num"] = [[[1.0, 2.0]]]  # wrong width
    with pytest.raises(StructureError):
        model_from_json(doc)
