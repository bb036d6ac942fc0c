"""Config parsing, command execution, exit codes, file formats, determinism."""

import os

import numpy as np
import pytest

import horloop as hl
from horloop.cli import read_loop_csv, run, write_loop
from horloop.config import ConfigError, parse_config
from horloop.models import flat_torus
from horloop.paths import Control
from horloop.solvers import Loop, SolverConfig, restore_constraint


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_summary(out_dir):
    entries = {}
    with open(os.path.join(out_dir, "summary.txt")) as fh:
        for line in fh:
            key, _, value = line.partition(" = ")
            entries[key.strip()] = value.strip()
    return entries


class TestConfig:
    def test_parses_flat_keys(self):
        cfg = parse_config("model.name = flat_torus\nmodel.params = 2\nrun.N = 32\n")
        assert cfg.model_name == "flat_torus"
        assert cfg.model_params == (2,)
        assert cfg.n == 32
        assert cfg.substeps == 4   # default

    def test_comments_and_blanks(self):
        cfg = parse_config("# a comment\n\nmodel.name = contact_t3  # trailing\n")
        assert cfg.model_name == "contact_t3"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("model.name = flat_torus\nsolver.bogus = 1\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("run.N = 8\nrun.N = 16\n")

    def test_positive_validation(self):
        with pytest.raises(ConfigError, match="positive"):
            parse_config("model.name = x\nsolver.tol_grad = -1e-7\n")
        with pytest.raises(ConfigError, match="positive"):
            parse_config("model.name = x\nrun.N = 0\n")

    def test_solver_overrides(self):
        cfg = parse_config("model.name = x\nsolver.tol_grad = 1e-9\nsolver.max_iter = 7\n")
        scfg = cfg.solver_config()
        assert scfg.tol_grad == 1e-9
        assert scfg.max_iter == 7

    def test_klass_list(self):
        cfg = parse_config("model.name = x\nsolve.klass = 1 0\n")
        np.testing.assert_array_equal(cfg.get_ints("solve.klass"), [1, 0])


class TestCommands:
    def test_solve_min_flat(self, tmp_path):
        cfg = write_cfg(tmp_path, (
            "model.name = flat_torus\nmodel.params = 2\nrun.N = 32\n"
            "run.rng_seed = 11\nsolve.klass = 1 0\n"
            f"output.dir = {tmp_path}/out\n"))
        code = run("solve-min", cfg, quiet=True)
        assert code == 0
        summary = read_summary(f"{tmp_path}/out")
        assert summary["status"] == "converged"
        assert float(summary["energy"]) == pytest.approx(2 * np.pi ** 2, rel=1e-2)
        assert os.path.exists(f"{tmp_path}/out/loop.csv")
        assert os.path.exists(f"{tmp_path}/out/trace.csv")

    def test_verify_roundtrip_certifies(self, tmp_path):
        cfg = write_cfg(tmp_path, (
            "model.name = flat_torus\nmodel.params = 2\nrun.N = 32\n"
            "run.rng_seed = 11\nsolve.klass = 1 0\n"
            f"output.dir = {tmp_path}/out\n"))
        assert run("solve-min", cfg, quiet=True) == 0
        vcfg = write_cfg(tmp_path, (
            "model.name = flat_torus\nmodel.params = 2\nrun.N = 32\n"
            f"verify.loop_file = {tmp_path}/out/loop.csv\n"
            f"output.dir = {tmp_path}/vout\n"), name="verify.cfg")
        assert run("verify", vcfg, quiet=True) == 0
        assert read_summary(f"{tmp_path}/vout")["status"] == "certified"

    def test_verify_constant_loop_exit_2(self, tmp_path):
        model = flat_torus(2)
        loop = Loop(Control(np.zeros((16, 2))), np.array([0.3, 0.4]),
                    np.zeros(2, dtype=int))
        write_loop(str(tmp_path / "out"), model, loop, 4)
        vcfg = write_cfg(tmp_path, (
            "model.name = flat_torus\nmodel.params = 2\n"
            f"verify.loop_file = {tmp_path}/out/loop.csv\n"
            f"output.dir = {tmp_path}/vout\n"))
        assert run("verify", vcfg, quiet=True) == 2
        summary = read_summary(f"{tmp_path}/vout")
        assert summary["reason"] == "constant curve: not a geodesic"

    def test_check_gradients(self, tmp_path):
        cfg = write_cfg(tmp_path, (
            "model.name = heisenberg\nmodel.params = 1\nrun.N = 16\n"
            "run.rng_seed = 5\ngradients.samples = 2\n"
            f"output.dir = {tmp_path}/out\n"))
        assert run("check-gradients", cfg, quiet=True) == 0
        summary = read_summary(f"{tmp_path}/out")
        assert float(summary["max_rel_error"]) < 1e-5

    def test_shoot_contact_t3(self, tmp_path):
        cfg = write_cfg(tmp_path, (
            "model.name = contact_t3\nrun.N = 64\n"
            "shoot.x0 = 0 0 0.1\nshoot.lam = 0.03 0.02 6.4\nshoot.T = 1\n"
            "shoot.steps = 256\n"
            f"output.dir = {tmp_path}/out\n"))
        assert run("shoot", cfg, quiet=True) == 0
        summary = read_summary(f"{tmp_path}/out")
        assert float(summary["energy"]) == pytest.approx(2 * np.pi ** 2, abs=1e-3)
        assert float(summary["periodicity_residual"]) < 1e-8

    def test_contract_flat(self, tmp_path):
        cfg = write_cfg(tmp_path, (
            "model.name = flat_torus\nmodel.params = 2\nrun.N = 32\n"
            "run.rng_seed = 4\ncontract.energy = 1e-4\ncontract.P = 3\n"
            f"output.dir = {tmp_path}/out\n"))
        assert run("contract", cfg, quiet=True) == 0

    def test_contract_wrapped_loop_fails(self, tmp_path):
        cfg = write_cfg(tmp_path, (
            "model.name = flat_torus\nmodel.params = 2\nrun.N = 32\n"
            "run.rng_seed = 4\ncontract.energy = 1e-4\ncontract.P = 2\n"
            "contract.wrap_klass = 1 0\n"
            f"output.dir = {tmp_path}/out\n"))
        assert run("contract", cfg, quiet=True) == 4
        summary = read_summary(f"{tmp_path}/out")
        assert "ContractionFailureError" in summary["reason"]

    def test_bad_config_exit_3_with_summary(self, tmp_path):
        cfg = write_cfg(tmp_path, "model.name = flat_torus\nbogus.key = 1\n")
        code = run("solve-min", cfg, output=str(tmp_path / "out"), quiet=True)
        assert code == 3
        summary = read_summary(str(tmp_path / "out"))
        assert summary["status"] == "input-error"
        assert "unknown key" in summary["reason"]

    def test_missing_config_exit_3(self, tmp_path):
        assert run("solve-min", str(tmp_path / "nope.cfg"),
                   output=str(tmp_path / "out"), quiet=True) == 3

    def test_unknown_model_exit_3(self, tmp_path):
        cfg = write_cfg(tmp_path, "model.name = mystery\nsolve.klass = 1\n")
        assert run("solve-min", cfg, output=str(tmp_path / "out"), quiet=True) == 3


class TestLoopCsv:
    def test_roundtrip_exact(self, tmp_path, rng):
        model = flat_torus(2)
        scfg = SolverConfig()
        raw = 0.3 * rng.standard_normal((16, 2))
        raw -= raw.mean(axis=0)
        loop = restore_constraint(model, Loop(Control(raw), np.array([0.5, -1.2]),
                                              np.zeros(2, dtype=int)), scfg)
        write_loop(str(tmp_path), model, loop, 4)
        back = read_loop_csv(str(tmp_path / "loop.csv"), model)
        np.testing.assert_array_equal(back.control.values, loop.control.values)
        np.testing.assert_array_equal(back.basepoint, loop.basepoint)
        np.testing.assert_array_equal(back.klass, loop.klass)

    def test_dimension_mismatch_rejected(self, tmp_path):
        model = flat_torus(2)
        loop = Loop(Control(np.zeros((8, 2))), np.zeros(2), np.zeros(2, dtype=int))
        write_loop(str(tmp_path), model, loop, 4)
        with pytest.raises(ConfigError):
            read_loop_csv(str(tmp_path / "loop.csv"), hl.heisenberg(1))


class TestDeterminism:
    @staticmethod
    def _summary_bytes(path):
        with open(path, "rb") as fh:
            return b"".join(line for line in fh if not line.startswith(b"wall_time"))

    def test_identical_runs_identical_outputs(self, tmp_path):
        text = ("model.name = flat_torus\nmodel.params = 2\nrun.N = 32\n"
                "run.rng_seed = 99\nsolve.klass = 1 0\n")
        for d in ("a", "b"):
            cfg = write_cfg(tmp_path, text + f"output.dir = {tmp_path}/{d}\n",
                            name=f"{d}.cfg")
            assert run("solve-min", cfg, quiet=True) == 0
        assert (self._summary_bytes(f"{tmp_path}/a/summary.txt")
                == self._summary_bytes(f"{tmp_path}/b/summary.txt"))
        for name in ("loop.csv", "trace.csv"):
            with open(f"{tmp_path}/a/{name}", "rb") as fa, \
                 open(f"{tmp_path}/b/{name}", "rb") as fb:
                assert fa.read() == fb.read()

    def test_seed_changes_output(self, tmp_path):
        outs = []
        for seed, d in ((1, "a"), (2, "b")):
            cfg = write_cfg(tmp_path, (
                "model.name = flat_torus\nmodel.params = 2\nrun.N = 32\n"
                f"run.rng_seed = {seed}\nsolve.klass = 1 0\n"
                f"output.dir = {tmp_path}/{d}\n"), name=f"{d}.cfg")
            assert run("solve-min", cfg, quiet=True) == 0
            with open(f"{tmp_path}/{d}/loop.csv", "rb") as fh:
                outs.append(fh.read())
        assert outs[0] != outs[1]
