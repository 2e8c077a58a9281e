import json
import math
import os

import pytest

from qrobust.cli import main


@pytest.fixture
def toy_files(tmp_path):
    qasm = (
        "OPENQASM 2.0;\n"
        'include "qelib1.inc";\n'
        "qreg q[1];\ncreg c[1];\n"
        "ry(1.45) q[0];\n"
        "measure q[0] -> c[0];\n"
    )
    model = tmp_path / "toy.qasm"
    model.write_text(qasm)
    config = {
        "measurement": {
            "labels": [0, 1],
            "operators": [
                [[[1, 0], [0, 0]], [[0, 0], [0, 0]]],
                [[[0, 0], [0, 0]], [[0, 0], [1, 0]]],
            ],
        },
        "measured_qubits": [0],
    }
    (tmp_path / "toy.json").write_text(json.dumps(config))
    states, labels = [], []
    for t in (0.0, 0.3, 2.8, math.pi):
        states.append([[math.cos(t / 2), 0.0], [math.sin(t / 2), 0.0]])
        labels.append(0 if math.cos(t + 1.45) > 0 else 1)
    (tmp_path / "data.json").write_text(
        json.dumps({"n_qubits": 1, "state_kind": "pure", "states": states, "labels": labels})
    )
    return tmp_path


def _run(tmp_path, args):
    cwd = os.getcwd()
    os.chdir(tmp_path)
    try:
        return main(args)
    finally:
        os.chdir(cwd)


def _report_sans_timings(path):
    doc = json.loads(path.read_text())
    doc.pop("timings")
    return json.dumps(doc, sort_keys=True)


class TestVerifyLocal:
    def test_end_to_end_report(self, toy_files):
        rc = _run(toy_files, [
            "verify-local", "--model", "toy.qasm", "--data", "data.json",
            "--eps", "0.001", "--state-type", "pure", "--mode", "accurate",
            "--out", "rep.json",
        ])
        assert rc == 0
        doc = json.loads((toy_files / "rep.json").read_text())
        assert doc["tool"]["name"] == "qrobust"
        assert doc["results"]["n_states"] == 4
        assert set(doc["results"]["counts"]) == {
            "robust", "non_robust", "undecided_by_rough", "undecided"
        }
        assert "per_state_s" in doc["timings"]
        assert (toy_files / "rep.counterexamples.json").exists()

    def test_rough_below_accurate(self, toy_files):
        _run(toy_files, [
            "verify-local", "--model", "toy.qasm", "--data", "data.json",
            "--eps", "0.01", "--state-type", "pure", "--mode", "rough", "--out", "r.json",
        ])
        _run(toy_files, [
            "verify-local", "--model", "toy.qasm", "--data", "data.json",
            "--eps", "0.01", "--state-type", "pure", "--mode", "accurate", "--out", "a.json",
        ])
        rough = json.loads((toy_files / "r.json").read_text())["results"]["robust_accuracy"]
        acc = json.loads((toy_files / "a.json").read_text())["results"]["robust_accuracy"]
        assert rough <= acc

    def test_missing_eps_exits_2(self, toy_files, capsys):
        rc = _run(toy_files, [
            "verify-local", "--model", "toy.qasm", "--data", "data.json",
            "--state-type", "pure",
        ])
        assert rc == 2

    def test_unreadable_model_exits_2(self, toy_files):
        rc = _run(toy_files, [
            "verify-local", "--model", "missing.qasm", "--data", "data.json",
            "--eps", "0.001", "--state-type", "pure",
        ])
        assert rc == 2

    def test_state_type_mismatch_exits_2(self, toy_files):
        rc = _run(toy_files, [
            "verify-local", "--model", "toy.qasm", "--data", "data.json",
            "--eps", "0.001", "--state-type", "mixed",
        ])
        assert rc == 2

    def test_schema_violation_exits_2(self, toy_files):
        (toy_files / "junk.json").write_text('{"states": []}')
        rc = _run(toy_files, [
            "verify-local", "--model", "toy.qasm", "--data", "junk.json",
            "--eps", "0.001", "--state-type", "pure",
        ])
        assert rc == 2

    def test_label_outside_measurement_set_exits_2(self, toy_files):
        doc = json.loads((toy_files / "data.json").read_text())
        doc["labels"][0] = 7
        (toy_files / "badlab.json").write_text(json.dumps(doc))
        rc = _run(toy_files, [
            "verify-local", "--model", "toy.qasm", "--data", "badlab.json",
            "--eps", "0.001", "--state-type", "pure",
        ])
        assert rc == 2

    def test_random_noise_requires_seed(self, toy_files):
        rc = _run(toy_files, [
            "verify-local", "--model", "toy.qasm", "--data", "data.json",
            "--eps", "0.001", "--state-type", "pure", "--random-noise",
        ])
        assert rc == 2

    def test_deterministic_reports(self, toy_files):
        args = [
            "verify-local", "--model", "toy.qasm", "--data", "data.json",
            "--eps", "0.001", "--state-type", "pure", "--mode", "accurate",
            "--random-noise", "--seed", "11", "--out", "det.json",
        ]
        _run(toy_files, args)
        first = _report_sans_timings(toy_files / "det.json")
        _run(toy_files, args)
        second = _report_sans_timings(toy_files / "det.json")
        assert first == second


class TestVerifyGlobal:
    def test_bit_flip_yes_verdict(self, toy_files):
        rc = _run(toy_files, [
            "verify-global", "--model", "toy.qasm", "--eps", "0.0003",
            "--delta", "0.0075", "--noise", "bit-flip", "--p", "0.0001",
            "--engine", "both", "--out", "g.json",
        ])
        assert rc == 0
        doc = json.loads((toy_files / "g.json").read_text())
        assert doc["results"]["robust"] is True
        assert doc["results"]["k_star"] == pytest.approx(0.99980, abs=1e-5)
        assert abs(doc["results"]["k_star_dense"] - doc["results"]["k_star_tn"]) <= 1e-5
        assert doc["results"]["kernel"] is None

    def test_phase_flip_no_verdict_attaches_kernel(self, toy_files):
        rc = _run(toy_files, [
            "verify-global", "--model", "toy.qasm", "--eps", "0.075",
            "--delta", "0.0003", "--noise", "phase-flip", "--p", "0.025",
            "--engine", "dense", "--out", "g2.json",
        ])
        assert rc == 0
        doc = json.loads((toy_files / "g2.json").read_text())
        assert doc["results"]["robust"] is False
        assert doc["results"]["k_star"] == pytest.approx(1.0, abs=1e-9)
        assert doc["results"]["kernel"] is not None
        assert len(doc["results"]["kernel"]["psi"]) == 2

    def test_nonconvergence_exits_3(self, toy_files, monkeypatch):
        from qrobust.errors import ConvergenceError
        import qrobust.cli as cli

        def boom(model):
            raise ConvergenceError("forced", lambda_min=0.0, lambda_max=1.0)

        monkeypatch.setattr(cli, "lipschitz_tn", boom)
        rc = _run(toy_files, [
            "verify-global", "--model", "toy.qasm", "--eps", "0.01",
            "--delta", "0.01", "--engine", "tn", "--out", "g3.json",
        ])
        assert rc == 3


class TestInjectRenderTrain:
    def test_inject_is_deterministic(self, toy_files):
        for prefix in ("n1", "n2"):
            rc = _run(toy_files, [
                "inject", "--model", "toy.qasm", "--seed", "42", "--out", prefix,
            ])
            assert rc == 0
        assert (toy_files / "n1.qasm").read_bytes() == (toy_files / "n2.qasm").read_bytes()
        assert (toy_files / "n1.noise.json").read_bytes() == (toy_files / "n2.noise.json").read_bytes()

    def test_injected_model_loads_back(self, toy_files):
        _run(toy_files, ["inject", "--model", "toy.qasm", "--seed", "3", "--out", "n3"])
        (toy_files / "n3.json").write_text((toy_files / "toy.json").read_text())
        rc = _run(toy_files, [
            "verify-local", "--model", "n3.qasm", "--data", "data.json",
            "--eps", "0.001", "--state-type", "pure", "--out", "n3rep.json",
        ])
        assert rc == 0
        doc = json.loads((toy_files / "n3rep.json").read_text())
        assert doc["config"]["noise_sidecar"].endswith("n3.noise.json")
        assert len(doc["config"]["noise_sites"]) >= 1

    def test_render_columns_in_order(self, toy_files, capsys):
        qasm = (
            "OPENQASM 2.0;\nqreg q[1];\n"
            "x q[0];\nh q[0];\nz q[0];\n"
        )
        (toy_files / "three.qasm").write_text(qasm)
        rc = _run(toy_files, ["render", "--model", "three.qasm"])
        assert rc == 0
        row = capsys.readouterr().out.splitlines()[0]
        assert row.index("[X]") < row.index("[H]") < row.index("[Z]")

    def test_render_to_file(self, toy_files):
        rc = _run(toy_files, ["render", "--model", "toy.qasm", "--out", "diag.txt"])
        assert rc == 0
        assert "[RY(1.45)]" in (toy_files / "diag.txt").read_text()

    def test_train_writes_history_and_params(self, toy_files):
        rc = _run(toy_files, [
            "train", "--model", "toy.qasm", "--data", "data.json",
            "--eps", "0.01", "--epochs", "3", "--lr", "0.5", "--out", "tr",
        ])
        assert rc == 0
        lines = (toy_files / "tr.history.csv").read_text().strip().splitlines()
        assert lines[0] == "epoch,loss,rough_ra,accurate_ra,counterexamples_added"
        assert 1 <= len(lines) - 1 <= 3
        params = json.loads((toy_files / "tr.params.json").read_text())
        assert "g0" in params["theta"]

    def test_train_without_rotations_exits_2(self, toy_files):
        (toy_files / "flat.qasm").write_text("OPENQASM 2.0;\nqreg q[1];\nx q[0];\n")
        (toy_files / "flat.json").write_text((toy_files / "toy.json").read_text())
        rc = _run(toy_files, [
            "train", "--model", "flat.qasm", "--data", "data.json",
            "--eps", "0.01", "--out", "x",
        ])
        assert rc == 2


class TestMixedDataset:
    def test_mixed_states_end_to_end(self, toy_files):
        states = [
            [[[0.95, 0], [0, 0]], [[0, 0], [0.05, 0]]],
            [[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]],
        ]
        (toy_files / "mixed.json").write_text(json.dumps(
            {"n_qubits": 1, "state_kind": "mixed", "states": states, "labels": [0, 0]}
        ))
        rc = _run(toy_files, [
            "verify-local", "--model", "toy.qasm", "--data", "mixed.json",
            "--eps", "0.01", "--state-type", "mixed", "--mode", "accurate",
            "--out", "mx.json",
        ])
        assert rc == 0
        doc = json.loads((toy_files / "mx.json").read_text())
        assert doc["results"]["n_states"] == 2
        cex = json.loads((toy_files / "mx.counterexamples.json").read_text())
        for entry in cex:
            # mixed counterexamples serialize as full density matrices
            assert len(entry["state"]) == 2 and len(entry["state"][0]) == 2
            assert len(entry["state"][0][0]) == 2


class TestReportContents:
    def test_command_echo_and_resolved_noise(self, toy_files):
        args = [
            "verify-global", "--model", "toy.qasm", "--eps", "0.01", "--delta", "0.02",
            "--random-noise", "--seed", "5", "--noise", "depolarizing", "--p", "0.05",
            "--out", "full.json",
        ]
        rc = _run(toy_files, args)
        assert rc == 0
        doc = json.loads((toy_files / "full.json").read_text())
        assert doc["command"] == args
        assert doc["config"]["random_noise"]["seed"] == 5
        assert doc["config"]["appended_noise"] == {"kind": "depolarizing", "p": 0.05}
        assert len(doc["config"]["noise_sites"]) >= 2
        assert doc["tool"]["version"]
