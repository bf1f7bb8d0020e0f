import numpy as np
import pytest
import torch

from conftest import TINY_T
from slerpevo.dataio import RunLogWriter, read_run_log
from slerpevo.errors import ArgumentError
from slerpevo.evolution import replay_run_log
from slerpevo.experiments import (default_lambda_grid, default_t_interp_grid,
                                  evolve_headless, exp1_run, exp2_run, exp3_run,
                                  interior_lambda_grid, sample_images, sample_standard)


def test_grids_have_nine_points_for_exact_tests():
    lams = default_lambda_grid()
    assert len(lams) == 9 and lams[0] == 0.0 and lams[-1] == 1.0
    interior = interior_lambda_grid()
    assert len(interior) == 9
    assert interior[0] == pytest.approx(0.1) and interior[-1] == pytest.approx(0.9)
    grid = default_t_interp_grid(1000)
    assert grid == (100, 200, 300, 400, 500, 600, 700, 800, 900)
    assert len(default_t_interp_grid(TINY_T)) == 9


def test_sample_standard_is_replayable(tiny_model, tiny_sched):
    genotypes, images, trajectories = sample_standard(tiny_model, tiny_sched,
                                                      count=2, seed=3, exp=1,
                                                      snapshot_stride=4)
    assert len(genotypes) == len(images) == len(trajectories) == 2
    from slerpevo.sampler import generate
    for g, img in zip(genotypes, images):
        replay, _, _ = generate(tiny_model, tiny_sched, g.x_T,
                                injected=g.injection(), t_interp=TINY_T)
        assert torch.equal(replay, img)


def test_sample_images_counts_and_determinism(tiny_model, tiny_sched):
    a = sample_images(tiny_model, tiny_sched, count=5, seed=4, batch_size=3)
    b = sample_images(tiny_model, tiny_sched, count=5, seed=4, batch_size=3)
    assert a.shape == (5, 1, 16, 16)
    assert torch.equal(a, b)


# ---------------------------------------------------------------------------
# experiment 1

@pytest.fixture(scope="module")
def exp1_small():
    import torch as _torch
    from slerpevo.denoiser import ArchConfig, DenoiserModel
    from slerpevo.schedule import linear_schedule
    _torch.manual_seed(1234)
    arch = ArchConfig(image_shape=(1, 16, 16), base_channels=8, channel_mult=(1, 2),
                      num_res_blocks=1, time_embed_dim=16, groups=4)
    model = DenoiserModel(arch).eval()
    sched = linear_schedule(TINY_T, 1e-3, 0.05)
    result = exp1_run(model, sched, seed=11, num_images=5, snapshot_stride=4,
                      lambdas=(0.0, 0.25, 0.5, 0.75, 1.0))
    return model, sched, result


def test_exp1_row_bookkeeping(exp1_small):
    _, _, result = exp1_small
    # stride 4, T=12: snapshots at t=8,4 plus the final row at t=0
    standard = [r for r in result.rows if r.kind == "standard"]
    interp = [r for r in result.rows if r.kind == "interp"]
    assert len(standard) == 5 * 3
    assert len(interp) == 5 * 3
    assert {r.t for r in standard} == {8, 4, 0}
    assert all(r.lam is None for r in standard)
    assert sorted({r.lam for r in interp}) == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_exp1_parents_are_the_finals_farthest_apart_on_pc1(exp1_small):
    _, _, result = exp1_small
    finals = {r.image_index: r.pc1 for r in result.rows
              if r.kind == "standard" and r.t == 0}
    best, best_pair = -1.0, None
    for i in finals:
        for j in finals:
            if i < j:
                d = abs(finals[i] - finals[j])
                if d > best:
                    best, best_pair = d, (i, j)
    assert (result.parent_a_index, result.parent_b_index) == best_pair


def test_exp1_lambda_zero_matches_parent_above_injection_boundary(exp1_small):
    _, _, result = exp1_small
    # default t_interp = 0.6T = 7, so steps t > 5 inherit: the t=8 snapshot
    # state is bit-equal to parent A's, the t=4 and final states are not
    parent_rows = {r.t: (r.pc1, r.pc2) for r in result.rows
                   if r.kind == "standard" and r.image_index == result.parent_a_index}
    zero_rows = {r.t: (r.pc1, r.pc2) for r in result.rows
                 if r.kind == "interp" and r.lam == 0.0}
    assert result.t_interp == 7
    # identical states; coords agree to rounding (the two projection calls
    # run the matmul on different matrix shapes)
    assert zero_rows[8] == pytest.approx(parent_rows[8], rel=1e-9)
    assert abs(zero_rows[0][0] - parent_rows[0][0]) > 1e-6


def test_exp1_full_injection_lambda_zero_replays_parent_everywhere(tiny_model, tiny_sched):
    result = exp1_run(tiny_model, tiny_sched, seed=12, num_images=3,
                      snapshot_stride=4, t_interp=TINY_T, lambdas=(0.0, 0.5, 1.0))
    parent_rows = {r.t: (r.pc1, r.pc2) for r in result.rows
                   if r.kind == "standard" and r.image_index == result.parent_a_index}
    zero_rows = {r.t: (r.pc1, r.pc2) for r in result.rows
                 if r.kind == "interp" and r.lam == 0.0}
    assert set(zero_rows) == set(parent_rows)
    for t in parent_rows:
        assert zero_rows[t] == pytest.approx(parent_rows[t], rel=1e-9), t
    assert result.final_pc1_by_lambda[0] == pytest.approx(parent_rows[0][0], rel=1e-9)


def test_exp1_correlation_uses_all_lambdas(exp1_small):
    _, _, result = exp1_small
    assert result.correlation.n == 5
    assert len(result.final_pc1_by_lambda) == 5
    assert result.correlation.method == "exact-permutation"


def test_exp1_rejects_too_few_images(tiny_model, tiny_sched):
    with pytest.raises(ArgumentError):
        exp1_run(tiny_model, tiny_sched, seed=0, num_images=1)


# ---------------------------------------------------------------------------
# experiment 2

def test_exp2_default_grid_and_reports(tiny_model, tiny_sched):
    result = exp2_run(tiny_model, tiny_sched, seed=21)
    assert len(result.lambdas) == 9
    assert len(result.dist_to_a) == 9 and len(result.dist_to_b) == 9
    assert all(d >= 0.0 for d in result.dist_to_a + result.dist_to_b)
    assert result.report_a.method == "exact-permutation"
    assert result.t_interp == 7  # 0.6T rounded


def test_exp2_swapping_parents_mirrors_distances_and_negates_rho(tiny_model, tiny_sched):
    normal = exp2_run(tiny_model, tiny_sched, seed=22)
    swapped = exp2_run(tiny_model, tiny_sched, seed=22, swap_parents=True)
    # shared mutation noise and the symmetric grid make the swap an exact
    # relabeling: child(lam) under (B,A) is child(1-lam) under (A,B)
    assert swapped.dist_to_a == normal.dist_to_b[::-1]
    assert swapped.dist_to_b == normal.dist_to_a[::-1]
    assert swapped.report_a.rho == pytest.approx(-normal.report_b.rho, abs=1e-15)
    assert swapped.report_b.rho == pytest.approx(-normal.report_a.rho, abs=1e-15)
    assert swapped.report_a.p_value == pytest.approx(normal.report_b.p_value, abs=1e-15)


# ---------------------------------------------------------------------------
# experiment 3

def test_exp3_full_injection_row_has_exactly_zero_diversity(tiny_model, tiny_sched):
    result = exp3_run(tiny_model, tiny_sched, seed=31, t_interps=(4, 8, TINY_T),
                      offspring=4)
    assert result.diversities[2] == 0.0
    assert min(result.diversities) == result.diversities[2]
    assert result.report.n == 3


def test_exp3_default_grid_has_nine_rows(tiny_model, tiny_sched):
    result = exp3_run(tiny_model, tiny_sched, seed=32, offspring=3)
    assert len(result.t_interps) == 9
    assert len(result.diversities) == 9
    assert result.t_interps == default_t_interp_grid(TINY_T)


def test_exp3_rejects_single_offspring(tiny_model, tiny_sched):
    with pytest.raises(ArgumentError):
        exp3_run(tiny_model, tiny_sched, seed=33, offspring=1)


# ---------------------------------------------------------------------------
# experiment 4 (headless evolution)

def test_evolve_headless_logs_and_replays(tiny_model, tiny_sched, tmp_path):
    target = torch.zeros(1, 16, 16)
    log_path = tmp_path / "run-log.jsonl"
    with RunLogWriter(log_path) as writer:
        result = evolve_headless(tiny_model, tiny_sched, seed=41, target_image=target,
                                 N=3, generations=3, t_interp0=4, s=4,
                                 log_writer=writer)
    assert len(result.best_distance) == 3
    assert len(result.selected) == 2
    assert all(d >= 0.0 for d in result.best_distance)

    events = read_run_log(log_path)
    assert [e["event"] for e in events] == \
        ["session_created", "generation_stepped", "generation_stepped"]
    replayed = replay_run_log(events, tiny_model, tiny_sched)
    for x, y in zip(result.session.population, replayed.population):
        assert x.id == y.id
        assert torch.equal(x.image, y.image)


def test_evolve_headless_single_generation(tiny_model, tiny_sched):
    result = evolve_headless(tiny_model, tiny_sched, seed=42,
                             target_image=torch.zeros(1, 16, 16),
                             N=2, generations=1, t_interp0=4, s=4)
    assert result.best_distance and len(result.selected) == 0


def test_evolve_headless_validates_generations(tiny_model, tiny_sched):
    with pytest.raises(ArgumentError):
        evolve_headless(tiny_model, tiny_sched, seed=43,
                        target_image=torch.zeros(1, 16, 16), generations=0)
