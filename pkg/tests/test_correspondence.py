import numpy as np
import pytest

from toothsparse.correspondence import (
    CorrespondedTooth, DentalModel, DentalTemplate, align_model_to_template, centroid_alignment, correspond_model,
    correspond_tooth,
)
from toothsparse.errors import DataError, DegenerateInputError
from toothsparse.geometry import RigidTransform, apply_transform, diameter, rms_residual
from toothsparse.synthetic import SynthConfig, sample_tooth_surface
from toothsparse.teeth import ALL_LABELS

from support import random_rigid


@pytest.fixture(scope="module")
def template(small_cohort):
    return small_cohort[0]


def as_model(teeth, sid="m"):
    return DentalModel(sid, dict(teeth))


def test_template_requires_all_teeth(template):
    teeth = dict(template.teeth)
    teeth.pop(36)
    with pytest.raises(DataError):
        DentalTemplate(teeth)
    with pytest.raises(TypeError):
        template.teeth[11] = np.zeros((3, 3))
    assert template.t_points(11) == 30


def test_model_and_tooth_contracts(template):
    with pytest.raises(DataError):
        DentalModel("empty", {})
    with pytest.raises(DataError):
        DentalModel("bad", {18: np.zeros((3, 3))})
    model = as_model(template.teeth)
    assert model.without([36]).labels == tuple(lab for lab in ALL_LABELS if lab != 36)
    assert CorrespondedTooth(11, template[11]).t_points == 30
    with pytest.raises(DataError):
        CorrespondedTooth(11, np.zeros((0, 3)))


def test_alignment_identity(template):
    t = align_model_to_template(as_model(template.teeth), template, [11, 26, 35])
    np.testing.assert_allclose(t.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(t.translation, 0.0, atol=1e-12)


def test_alignment_recovers_inverse_motion(template, rng):
    T = random_rigid(rng, 30.0)
    model = as_model({lab: apply_transform(T, c) for lab, c in template.teeth.items()})
    t = align_model_to_template(model, template)
    inv = T.inverse()
    np.testing.assert_allclose(t.rotation, inv.rotation, atol=1e-12)
    np.testing.assert_allclose(t.translation, inv.translation, atol=1e-9)
    src = np.array([model[lab].mean(0) for lab in ALL_LABELS])
    dst = template.centroids(ALL_LABELS)
    assert rms_residual(t, src, dst) <= 1e-9


def test_alignment_with_shape_noise(template):
    rng = np.random.default_rng(8)
    residuals = []
    labels = list(ALL_LABELS)
    for _ in range(100):
        noisy = {lab: c + rng.normal(scale=0.1, size=c.shape) for lab, c in template.teeth.items()}
        t = align_model_to_template(as_model(noisy), template)
        src = np.array([noisy[lab].mean(0) for lab in labels])
        residuals.append(rms_residual(t, src, template.centroids(labels)))
    assert np.mean(residuals) <= 0.1


def test_alignment_errors(template):
    model = as_model(template.teeth)
    with pytest.raises(DataError):
        align_model_to_template(model, template, [11])
    with pytest.raises(DegenerateInputError):
        align_model_to_template(model, template, [11, 21])
    with pytest.raises(DataError):
        centroid_alignment(model.without([11]).teeth, template.teeth, [11, 12, 13])


def test_correspond_tooth_fixed_point(template):
    out = correspond_tooth(template[14], template[14])
    np.testing.assert_array_equal(out, template[14])


@pytest.mark.parametrize("label", [11, 16, 36])
def test_correspond_tooth_dense_resampling(label):
    # dense cloud holds the template points plus four times as many fresh surface samples
    cfg = SynthConfig()
    n = cfg.t_points(label)
    tpl = sample_tooth_surface(cfg, label, n)
    dense = np.vstack([tpl, sample_tooth_surface(cfg, label, 4 * n)])
    dense = dense[np.random.default_rng(label).permutation(len(dense))]
    out = correspond_tooth(tpl, dense)
    assert out.shape == tpl.shape
    assert np.linalg.norm(out - tpl, axis=1).max() <= 0.02 * diameter(tpl)


def test_correspond_tooth_ignores_far_outlier(template):
    tpl = template[23]
    outlier = tpl.mean(0) + np.array([11.0 * diameter(tpl), 0.0, 0.0])
    subject = np.vstack([tpl * 1.02, outlier])
    out = correspond_tooth(tpl, subject)
    assert not np.any(np.all(out == outlier, axis=1))


def test_correspond_model_identity_and_rigid_invariance(template, rng):
    ident = correspond_model(as_model(template.teeth), template)
    for lab in ALL_LABELS:
        np.testing.assert_allclose(ident[lab], template[lab], rtol=0, atol=1e-12)
    T = random_rigid(rng, 20.0)
    moved = correspond_model(as_model({lab: apply_transform(T, c) for lab, c in template.teeth.items()}), template)
    for lab in ALL_LABELS:
        assert np.abs(moved[lab] - ident[lab]).max() <= 1e-6


def test_correspond_model_missing_tooth(template):
    out = correspond_model(as_model(template.teeth).without([36]), template)
    assert len(out) == 27
    assert 36 not in out


def test_corresponded_points_are_subject_points(small_cohort):
    template, subjects = small_cohort
    s = subjects[0]
    t = align_model_to_template(s.model, template)
    out = correspond_model(s.model, template, labels=[11, 26, 44], transform=t)
    for lab, cloud in out.items():
        aligned = apply_transform(t, s.model[lab])
        assert cloud.shape == template[lab].shape
        for p in cloud:
            assert np.any(np.all(aligned == p, axis=1))


def test_correspondence_is_deterministic(small_cohort):
    template, subjects = small_cohort
    a = correspond_model(subjects[1].model, template, labels=[12, 47])
    b = correspond_model(subjects[1].model, template, labels=[12, 47])
    assert all(a[lab].tobytes() == b[lab].tobytes() for lab in a)


def test_correspond_model_errors(template):
    with pytest.raises(DataError):
        correspond_model(as_model({11: template[11]}), template)
    with pytest.raises(DataError):
        correspond_model(as_model(template.teeth).without([12]), template, labels=[12],
                         transform=RigidTransform.identity())
