import numpy as np
import pytest
import torch

from slerpevo.denoiser import ArchConfig, DenoiserModel, training_loss
from slerpevo.schedule import linear_schedule

TINY_T = 12

# One line per acceptance criterion, filled in by tests/test_acceptance.py and
# echoed after the run (pytest captures stdout, so tests cannot print directly).
ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.lstrip("P"))):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])

# 235 parameters; small enough for exhaustive finite-difference sweeps
MINIATURE_ARCH = ArchConfig(image_shape=(1, 4, 4), base_channels=1, channel_mult=(1,),
                            num_res_blocks=1, time_embed_dim=4, groups=1)


def fd_gradient_rel_errors(model, x0, t, eps, sched, coords=None, h=1e-5):
    """Per-coordinate relative gap between backprop and central differences.

    The model must be in float64. Relative error uses denominator
    max(|analytic|, |fd|, 1e-6); coordinates with both routes below 1e-6
    count the absolute gap against that floor.
    """
    loss = training_loss(model, x0, t, eps, sched)
    model.zero_grad()
    loss.backward()
    params = list(model.parameters())
    if coords is None:
        coords = [(pi, ci) for pi, p in enumerate(params) for ci in range(p.numel())]
    errors = []
    for pi, ci in coords:
        flat = params[pi].data.view(-1)
        orig = flat[ci].item()
        step = h * max(1.0, abs(orig))
        with torch.no_grad():
            flat[ci] = orig + step
            f_plus = training_loss(model, x0, t, eps, sched).item()
            flat[ci] = orig - step
            f_minus = training_loss(model, x0, t, eps, sched).item()
            flat[ci] = orig
        fd = (f_plus - f_minus) / (2.0 * step)
        analytic = params[pi].grad.view(-1)[ci].item()
        errors.append(abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6))
    return np.asarray(errors)


@pytest.fixture()
def tiny_sched():
    return linear_schedule(TINY_T, 1e-3, 0.05)


@pytest.fixture()
def tiny_model():
    """Small untrained (but deterministic) model; enough for sampler and
    evolution mechanics, which do not care about image quality."""
    torch.manual_seed(1234)
    arch = ArchConfig(image_shape=(1, 16, 16), base_channels=8, channel_mult=(1, 2),
                      num_res_blocks=1, time_embed_dim=16, groups=4)
    return DenoiserModel(arch).eval()


@pytest.fixture()
def gauss_pair():
    rng = np.random.default_rng(99)
    a = torch.from_numpy(rng.standard_normal((1, 16, 16)).astype(np.float32))
    b = torch.from_numpy(rng.standard_normal((1, 16, 16)).astype(np.float32))
    return a, b
