import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wcnn.datagen import GenConfig, generate, split
from wcnn.evaluation import (SimilarityMatrix, correlation_diagnostic,
                             cosine_similarity_matrix, cross_block_diagonal,
                             embed_gallery_probe, evaluate, rank1_accuracy,
                             report_from_similarity, roc_and_vr, write_matrix_csv,
                             write_roc_csv)
from wcnn.linalg import make_rng
from wcnn.model import NIR, ClassifierParams, ModelConfig, embed, init_params

from oracles import rank1_bruteforce, vr_at_far_bruteforce


def random_instance(seed, g=5, p=20, discrete=False):
    rng = make_rng(seed)
    values = rng.integers(-3, 4, size=(g, p)) / 3 if discrete else rng.uniform(-1, 1, size=(g, p))
    gl = np.arange(g)
    pl = rng.integers(0, g, size=p)
    return SimilarityMatrix(values, gl, pl)


def test_cosine_trivial():
    e = np.array([[1.0, 0.0], [0.0, 2.0]])
    sim = cosine_similarity_matrix(e, e)
    np.testing.assert_allclose(sim.values, np.eye(2), atol=1e-15)


def test_cosine_zero_vector_flagged():
    sim = cosine_similarity_matrix([[0.0, 0.0], [1.0, 1.0]], [[1.0, 0.0]])
    assert sim.values[0, 0] == 0.0 and sim.zero_norm == 1


def test_cosine_errors():
    with pytest.raises(ValueError):
        cosine_similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))
    with pytest.raises(ValueError):
        cosine_similarity_matrix(np.ones((0, 3)), np.ones((2, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_cosine_oracle_and_scale_invariance(seed):
    rng = make_rng(seed)
    g, p = rng.normal(size=(4, 5)), rng.normal(size=(6, 5))
    sim = cosine_similarity_matrix(g, p)
    for i in range(4):
        for j in range(6):
            ref = g[i] @ p[j] / (np.linalg.norm(g[i]) * np.linalg.norm(p[j]))
            assert abs(sim.values[i, j] - ref) <= 1e-12
    g2 = g.copy()
    g2[1] *= 10 ** rng.uniform(-3, 3)
    np.testing.assert_allclose(cosine_similarity_matrix(g2, p).values, sim.values, atol=1e-12)


def test_rank1_identity_and_adversarial():
    assert rank1_accuracy(SimilarityMatrix(np.eye(4), np.arange(4), np.arange(4))) == 1.0
    adv = np.ones((4, 4)) - np.eye(4)
    assert rank1_accuracy(SimilarityMatrix(adv, np.arange(4), np.arange(4))) == 0.0


def test_rank1_ties_lowest_index():
    sim = SimilarityMatrix(np.zeros((3, 2)), np.array([7, 8, 9]), np.array([7, 9]))
    assert rank1_accuracy(sim) == 0.5


def test_rank1_missing_subject():
    with pytest.raises(ValueError):
        rank1_accuracy(SimilarityMatrix(np.eye(2), np.array([0, 1]), np.array([0, 5])))


@pytest.mark.parametrize("discrete", [False, True])
def test_metrics_match_bruteforce(discrete):
    for seed in range(50):
        sim = random_instance(seed, discrete=discrete)
        assert rank1_accuracy(sim) == rank1_bruteforce(sim.values, sim.gallery_labels, sim.probe_labels)
        for target in (0.01, 0.1, 0.3):
            _, vr = roc_and_vr(sim, (target,))
            assert vr[target] == vr_at_far_bruteforce(sim.values, sim.gallery_labels,
                                                      sim.probe_labels, target)


@pytest.mark.parametrize("seed", range(10))
def test_monotone_transform_invariance(seed):
    sim = random_instance(seed)
    warped = SimilarityMatrix(np.tanh(3 * sim.values) ** 3, sim.gallery_labels, sim.probe_labels)
    assert rank1_accuracy(warped) == rank1_accuracy(sim)
    assert roc_and_vr(warped, (0.05, 0.2))[1] == roc_and_vr(sim, (0.05, 0.2))[1]
    assert [v for _, v in roc_and_vr(warped)[0]] == [v for _, v in roc_and_vr(sim)[0]]


@pytest.mark.parametrize("seed", range(10))
def test_roc_monotone(seed):
    roc, _ = roc_and_vr(random_instance(seed, discrete=seed % 2 == 0))
    far = np.array([f for f, _ in roc])
    vr = np.array([v for _, v in roc])
    assert roc[0] == (0.0, 0.0) and roc[-1] == (1.0, 1.0)
    assert np.all(np.diff(far) >= 0) and np.all(np.diff(vr) >= 0)


def test_perfect_separation():
    values = np.where(np.eye(3, 6, dtype=bool) | np.eye(3, 6, k=3, dtype=bool), 0.9, -0.5)
    sim = SimilarityMatrix(values, np.arange(3), np.array([0, 1, 2, 0, 1, 2]))
    _, vr = roc_and_vr(sim)
    assert vr == {0.01: 1.0, 0.001: 1.0}


def test_degenerate_single_value():
    sim = SimilarityMatrix(np.full((2, 2), 0.3), np.arange(2), np.arange(2))
    roc, vr = roc_and_vr(sim, (0.5,))
    assert roc == [(0.0, 0.0), (1.0, 1.0)]
    assert vr[0.5] == 0.0


def test_roc_needs_both_pair_types():
    with pytest.raises(ValueError):
        roc_and_vr(SimilarityMatrix(np.ones((1, 2)), np.array([0]), np.array([0, 0])))


def test_correlation_diagnostic():
    rng = make_rng(0)
    f = rng.normal(size=(3, 5))
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    corr = correlation_diagnostic(ClassifierParams(f, f.copy()))
    np.testing.assert_allclose(cross_block_diagonal(corr), 1.0, atol=1e-12)
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    corr = correlation_diagnostic(ClassifierParams(q[:3], q[3:]))
    np.testing.assert_allclose(corr[:3, 3:], 0.0, atol=1e-12)
    zero = correlation_diagnostic(ClassifierParams(np.zeros((2, 4)), rng.normal(size=(2, 4))))
    assert np.all(zero[:2] == 0)
    assert np.all(np.abs(zero) <= 1)


SPLIT = split(generate(GenConfig(num_subjects=10, nir_per_subject=3, vis_per_subject=2)), 0.5, make_rng(0))


def test_embed_replay_and_self_match():
    params = init_params(ModelConfig(input_dim=32, hidden=(16,), p=8, d=8, num_classes=5), make_rng(1))
    gallery, probe = embed_gallery_probe(SPLIT, params)
    ds = SPLIT.dataset
    for k, i in enumerate(SPLIT.probe_indices[:5]):
        np.testing.assert_allclose(probe[k], embed(ds.inputs[i:i + 1], params, NIR)[0], rtol=0, atol=1e-13)
    sim = cosine_similarity_matrix(gallery, gallery, ds.subject_ids[SPLIT.gallery_indices],
                                   ds.subject_ids[SPLIT.gallery_indices])
    assert rank1_accuracy(sim) == 1.0


def test_zero_network_gives_equal_embeddings():
    params = init_params(ModelConfig(input_dim=32, hidden=(16,), p=8, d=8, num_classes=5), make_rng(2))
    for _, arr in params.named_arrays():
        arr[...] = 0
    gallery, probe = embed_gallery_probe(SPLIT, params)
    assert np.all(gallery == 0) and np.all(probe == 0)
    report, _ = evaluate(SPLIT, params)
    assert report.zero_norm_embeddings == len(gallery) + len(probe)


def test_evaluate_report_and_files(tmp_path):
    params = init_params(ModelConfig(input_dim=32, hidden=(16,), p=8, d=8, num_classes=5), make_rng(3))
    report, sim = evaluate(SPLIT, params)
    assert report.num_gallery == 5 and report.num_probe == 15
    assert report.num_genuine == 15 and report.num_impostor == 60
    assert 0 <= report.rank1 <= 1
    assert report.to_json() == report_from_similarity(sim).to_json()
    write_roc_csv(report.roc, tmp_path / "roc.csv")
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "far,vr" and len(lines) == len(report.roc) + 1
    write_matrix_csv(np.eye(2), tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == "1,0\n0,1\n"


def test_similarity_label_mismatch():
    with pytest.raises(ValueError):
        SimilarityMatrix(np.zeros((2, 3)), np.arange(2), np.arange(2))
