import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from prosotts.modules.quantizer import VectorQuantizer


def make_quantizer(entries):
    entries = torch.tensor(entries, dtype=torch.float32)
    vq = VectorQuantizer(entries.shape[0], entries.shape[1])
    vq.embedding.data = entries
    return vq


def test_exact_match_zero_losses():
    vq = VectorQuantizer(8, 4)
    h = vq.embedding.data[3].clone()
    index, z_q, codebook_loss, commit_loss = vq.quantize(h)
    assert index == 3
    assert codebook_loss.detach().item() == pytest.approx(0.0, abs=1e-12)
    assert commit_loss.detach().item() == pytest.approx(0.0, abs=1e-12)
    torch.testing.assert_close(z_q, h)


def test_hand_computed_example():
    vq = make_quantizer([[0.0, 0.0], [1.0, 1.0]])
    index, z_q, codebook_loss, commit_loss = vq.quantize(torch.tensor([0.2, 0.1]))
    assert index == 0
    torch.testing.assert_close(z_q, torch.tensor([0.0, 0.0]))
    assert codebook_loss.detach().item() == pytest.approx(0.05)
    assert commit_loss.detach().item() == pytest.approx(0.05)


def test_tie_breaks_to_lowest_index():
    vq = make_quantizer([[1.0, 0.0], [-1.0, 0.0]])
    index, _, _, _ = vq.quantize(torch.tensor([0.0, 0.0]))
    assert index == 0


def test_default_shapes():
    vq = VectorQuantizer(2048, 256)
    assert vq.embedding.shape == (2048, 256)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_nearest_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    entries = rng.normal(size=(16, 6))
    h = rng.normal(size=6)
    vq = make_quantizer(entries)
    index, _, _, _ = vq.quantize(torch.tensor(h, dtype=torch.float32))
    expected = int(np.argmin(((entries - h) ** 2).sum(axis=1)))
    assert index == expected


def test_straight_through_gradient_matches_finite_differences():
    # the straight-through Jacobian dz_q/dh is the identity, so the gradient of
    # any f(z_q) w.r.t. h must match finite differences of f with z_q := h
    torch.manual_seed(3)
    vq = VectorQuantizer(4, 2)
    weight = torch.tensor([0.7, -1.3], dtype=torch.float64)

    def f_quantized(h):
        _, z_q, _, _ = vq(h.unsqueeze(0).float())
        return (weight.float() * z_q[0]).sum()

    def f_identity(h):
        return (weight * h.double()).sum()

    h0 = torch.tensor([0.31, -0.12], requires_grad=True)
    f_quantized(h0).backward()
    grad = h0.grad.double()

    eps = 1e-4
    fd = torch.zeros(2, dtype=torch.float64)
    for i in range(2):
        hp, hm = h0.detach().double().clone(), h0.detach().double().clone()
        hp[i] += eps
        hm[i] -= eps
        fd[i] = (f_identity(hp) - f_identity(hm)) / (2 * eps)
    rel = float(((grad - fd).abs() / fd.abs().clamp(min=1e-8)).max())
    assert rel < 1e-4


def test_straight_through_quadratic_at_codebook_entry():
    # at a codebook entry z_q == h, so even a nonlinear functional agrees with
    # finite differences of f(h)
    torch.manual_seed(4)
    vq = VectorQuantizer(4, 2)
    weight = torch.tensor([0.5, 1.1], dtype=torch.float64)
    h0 = vq.embedding.data[1].clone().requires_grad_(True)

    def f(z):
        return (weight.to(z.dtype) * z**2).sum()

    _, z_q, _, _ = vq(h0.unsqueeze(0))
    f(z_q[0]).backward()
    grad = h0.grad.double()

    eps = 1e-4
    fd = torch.zeros(2, dtype=torch.float64)
    for i in range(2):
        hp, hm = h0.detach().double().clone(), h0.detach().double().clone()
        hp[i] += eps
        hm[i] -= eps
        fd[i] = (f(hp) - f(hm)) / (2 * eps)
    rel = float(((grad - fd).abs() / fd.abs().clamp(min=1e-8)).max())
    assert rel < 1e-4


def test_nonfinite_input_raises():
    vq = VectorQuantizer(4, 2)
    with pytest.raises(FloatingPointError):
        vq.quantize(torch.tensor([float("nan"), 0.0]))


def test_dead_code_revival():
    vq = VectorQuantizer(4, 2, dead_code_steps=3)
    before = vq.embedding.data.clone()
    used = torch.tensor([0, 1])
    enc = torch.randn(10, 2)
    revived = 0
    for _ in range(3):
        revived = vq.track_usage(used, enc)
    assert revived == 2
    # the two dead entries were re-seeded from encoder outputs
    assert not torch.equal(vq.embedding.data[2:], before[2:])
    for row in vq.embedding.data[2:]:
        assert any(torch.allclose(row, e) for e in enc)
    torch.testing.assert_close(vq.embedding.data[:2], before[:2])
