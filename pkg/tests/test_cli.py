"""End-to-end tests for the maskctl command-line interface."""

import json
import shutil
import subprocess

import numpy as np
import pytest

from maskctl.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from maskctl.fusion import fused_heatmap
from maskctl.losses import LossConfig, TagSet, loss_weak_tags
from maskctl.tensor_store import (
    load_manifest,
    read_binary_mask,
    read_tensor,
    write_binary_mask,
    write_label_mask,
)

from conftest import build_dataset, tree_digest


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestFuse:
    def test_writes_heatmaps_and_summary_lines(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data")
        out = tmp_path / "heat"
        code, stdout, stderr = run_cli(
            ["fuse", "--manifest", str(manifest), "--out", str(out)], capsys
        )
        assert code == EXIT_OK and stderr == ""
        lines = stdout.splitlines()
        assert [ln.split("\t")[0] for ln in lines] == ["img_a", "img_b", "img_c"]
        for line in lines:
            assert "heatmap=" in line and "range=[" in line
        heat = read_tensor(out / "img_a.fgbg")
        assert heat.shape == (20, 20)
        assert 0.0 <= heat.min() and heat.max() <= 1.0

    def test_matches_library_fusion(self, tmp_path, capsys):
        manifest_path = build_dataset(tmp_path / "data", ids=("solo",))
        out = tmp_path / "heat"
        run_cli(["fuse", "--manifest", str(manifest_path), "--out", str(out)], capsys)
        manifest = load_manifest(manifest_path)
        entry = manifest.entries[0]
        stacks = [
            read_tensor(manifest.resolve(entry.activation_paths[k]))
            for k in sorted(entry.activation_paths)
        ]
        expected = fused_heatmap(stacks, 20, 20)
        np.testing.assert_allclose(read_tensor(out / "solo.fgbg"), expected, atol=1e-7)

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data")
        out = tmp_path / "heat"
        code1, stdout1, _ = run_cli(
            ["fuse", "--manifest", str(manifest), "--out", str(out)], capsys
        )
        first = tree_digest(out)
        code2, stdout2, _ = run_cli(
            ["fuse", "--manifest", str(manifest), "--out", str(out)], capsys
        )
        assert (code1, code2) == (EXIT_OK, EXIT_OK)
        assert stdout1 == stdout2
        assert tree_digest(out) == first

    def test_empty_manifest_succeeds_quietly(self, tmp_path, capsys):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({"num_classes": 3, "entries": []}))
        code, stdout, stderr = run_cli(
            ["fuse", "--manifest", str(manifest), "--out", str(tmp_path / "o")], capsys
        )
        assert code == EXIT_OK and stdout == "" and stderr == ""

    def test_corrupt_activation_fails_only_that_image(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data")
        (tmp_path / "data" / "img_b.conv4.fgbg").write_bytes(b"garbage")
        out = tmp_path / "heat"
        code, stdout, stderr = run_cli(
            ["fuse", "--manifest", str(manifest), "--out", str(out)], capsys
        )
        assert code == EXIT_DATA
        assert "img_b" in stderr
        assert [ln.split("\t")[0] for ln in stdout.splitlines()] == ["img_a", "img_c"]
        assert (out / "img_a.fgbg").exists() and (out / "img_c.fgbg").exists()
        assert not (out / "img_b.fgbg").exists()


class TestMask:
    def test_writes_binary_masks(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", size=16)
        out = tmp_path / "masks"
        code, stdout, _ = run_cli(
            ["mask", "--manifest", str(manifest), "--out", str(out), "--iterations", "2"],
            capsys,
        )
        assert code == EXIT_OK
        for line in stdout.splitlines():
            image_id, mask_field, fg_field = line.split("\t")
            assert mask_field == f"mask={out / (image_id + '.png')}"
            mask = read_binary_mask(out / f"{image_id}.png")
            assert set(np.unique(mask)) <= {0, 1}
            assert fg_field == f"foreground={int(mask.sum())}px"

    def test_thread_count_does_not_change_outputs(self, tmp_path, capsys, monkeypatch):
        manifest = build_dataset(tmp_path / "data", size=16)
        runs = {}
        for threads in ("1", "4"):
            monkeypatch.setenv("MASKCTL_THREADS", threads)
            out = tmp_path / f"masks_{threads}"
            code, stdout, _ = run_cli(
                ["mask", "--manifest", str(manifest), "--out", str(out), "--iterations", "2"],
                capsys,
            )
            assert code == EXIT_OK
            runs[threads] = (stdout.replace(f"masks_{threads}", "masks"), tree_digest(out))
        assert runs["1"] == runs["4"]


class TestCandidates:
    def test_layout_and_order_file(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", size=16)
        out = tmp_path / "cands"
        code, stdout, _ = run_cli(
            [
                "candidates", "--manifest", str(manifest), "--out", str(out),
                "--iterations", "2", "--num-candidates", "2", "--lambda", "0.4",
            ],
            capsys,
        )
        assert code == EXIT_OK
        assert json.loads((out / "order.json").read_text()) == ["img_a", "img_b", "img_c"]
        for image_id in ("img_a", "img_b", "img_c"):
            root = out / image_id
            assert (root / "candidate_0.png").exists() and (root / "candidate_1.png").exists()
            assert (root / "image.png").read_bytes() == (
                tmp_path / "data" / f"{image_id}.png"
            ).read_bytes()
            meta = json.loads((root / "meta.json").read_text())
            assert meta["image_id"] == image_id and len(meta["energies"]) == 2
        for line in stdout.splitlines():
            assert "\tcandidates=2\tenergy0=" in line

    def test_single_candidate_equals_mask_command(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", size=16)
        masks = tmp_path / "masks"
        cands = tmp_path / "cands"
        run_cli(
            ["mask", "--manifest", str(manifest), "--out", str(masks), "--iterations", "3"],
            capsys,
        )
        run_cli(
            [
                "candidates", "--manifest", str(manifest), "--out", str(cands),
                "--iterations", "3", "--num-candidates", "1",
            ],
            capsys,
        )
        for image_id in ("img_a", "img_b", "img_c"):
            assert (cands / image_id / "candidate_0.png").read_bytes() == (
                masks / f"{image_id}.png"
            ).read_bytes()

    def test_zero_lambda_repeats_candidates(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", ids=("one",), size=16)
        out = tmp_path / "cands"
        code, _, _ = run_cli(
            [
                "candidates", "--manifest", str(manifest), "--out", str(out),
                "--iterations", "2", "--num-candidates", "3", "--lambda", "0",
            ],
            capsys,
        )
        assert code == EXIT_OK
        first = (out / "one" / "candidate_0.png").read_bytes()
        assert (out / "one" / "candidate_1.png").read_bytes() == first
        assert (out / "one" / "candidate_2.png").read_bytes() == first


class TestLoss:
    def test_weak_variant_passes_gradient_check(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", size=12)
        code, stdout, stderr = run_cli(
            ["loss", "--manifest", str(manifest), "--variant", "weak"], capsys
        )
        assert code == EXIT_OK and stderr == ""
        lines = stdout.splitlines()
        assert len(lines) == 3
        for line in lines:
            assert line.endswith("grad_check=ok")
            assert "\tweak\tloss=" in line

    def test_reported_value_matches_library(self, tmp_path, capsys):
        manifest_path = build_dataset(tmp_path / "data", ids=("solo",), size=12)
        _, stdout, _ = run_cli(
            ["loss", "--manifest", str(manifest_path), "--variant", "weak"], capsys
        )
        reported = float(stdout.split("loss=")[1].split("\t")[0])
        manifest = load_manifest(manifest_path)
        entry = manifest.entries[0]
        scores = read_tensor(manifest.resolve(entry.score_path)).astype(np.float64)
        tags = TagSet(frozenset(entry.tags_present), frozenset(entry.tags_absent))
        expected = loss_weak_tags(scores, tags, LossConfig()).value
        assert reported == pytest.approx(expected, abs=1e-9)

    def test_mask_variant_requires_out(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", size=12)
        code, _, stderr = run_cli(
            ["loss", "--manifest", str(manifest), "--variant", "mask"], capsys
        )
        assert code == EXIT_USAGE
        assert "--out" in stderr

    def test_mask_variant_reads_mask_layout(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", size=12)
        layout = tmp_path / "selected"
        rng = np.random.default_rng(17)
        for image_id in ("img_a", "img_b", "img_c"):
            mask = (rng.random((12, 12)) < 0.4).astype(np.int64)
            mask[0, 0], mask[-1, -1] = 1, 0
            (layout / image_id).mkdir(parents=True)
            write_binary_mask(layout / image_id / "mask.png", mask)
        code, stdout, _ = run_cli(
            ["loss", "--manifest", str(manifest), "--variant", "mask", "--out", str(layout)],
            capsys,
        )
        assert code == EXIT_OK
        assert all("grad_check=ok" in ln for ln in stdout.splitlines())

    def test_missing_mask_is_data_error(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", size=12)
        code, _, stderr = run_cli(
            ["loss", "--manifest", str(manifest), "--variant", "mask", "--out",
             str(tmp_path / "nothing")],
            capsys,
        )
        assert code == EXIT_DATA
        assert "missing mask" in stderr

    def test_saturated_scores_fail_gradient_check(self, tmp_path, capsys):
        # An absent class promoted to probability ~1 hits the log(1 - S)
        # clamp; its analytic gradient then disagrees with finite
        # differences, which the spot check must surface as exit 3.
        manifest = build_dataset(tmp_path / "data", size=12, scores="saturated")
        code, stdout, _ = run_cli(
            ["loss", "--manifest", str(manifest), "--variant", "weak"], capsys
        )
        assert code == EXIT_NUMERIC
        assert all(ln.endswith("grad_check=FAIL") for ln in stdout.splitlines())

    def test_manifest_without_scores_is_data_error(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", size=12, scores=None)
        code, _, stderr = run_cli(
            ["loss", "--manifest", str(manifest), "--variant", "weak"], capsys
        )
        assert code == EXIT_DATA
        assert "score_path" in stderr


class TestEval:
    @staticmethod
    def _write_pair(pred_dir, gt_dir, name, pred, gt):
        pred_dir.mkdir(exist_ok=True)
        gt_dir.mkdir(exist_ok=True)
        write_label_mask(pred_dir / name, np.asarray(pred, dtype=np.int64))
        write_label_mask(gt_dir / name, np.asarray(gt, dtype=np.int64))

    def test_identical_dirs_score_hundred(self, tmp_path, capsys):
        pred, gt = tmp_path / "pred", tmp_path / "gt"
        rng = np.random.default_rng(23)
        for i in range(3):
            labels = rng.integers(0, 3, size=(6, 6))
            self._write_pair(pred, gt, f"im{i}.png", labels, labels)
        code, stdout, _ = run_cli([
            "eval", str(pred), str(gt), "--num-classes", "3"
        ], capsys)
        assert code == EXIT_OK
        assert stdout.splitlines()[1].split()[-1] == "100.0"

    def test_hand_checked_fixture_table(self, tmp_path, capsys):
        pred, gt = tmp_path / "pred", tmp_path / "gt"
        self._write_pair(pred, gt, "only.png", [[0, 1], [1, 1]], [[0, 0], [1, 1]])
        code, stdout, _ = run_cli([
            "eval", str(pred), str(gt), "--num-classes", "2"
        ], capsys)
        assert code == EXIT_OK
        header, values = stdout.splitlines()
        assert header.split() == ["class_0", "class_1", "mIOU"]
        assert values.split() == ["50.0", "66.7", "58.3"]

    def test_missing_ground_truth_is_data_error(self, tmp_path, capsys):
        pred, gt = tmp_path / "pred", tmp_path / "gt"
        labels = np.ones((4, 4), dtype=np.int64)
        self._write_pair(pred, gt, "a.png", labels, labels)
        write_label_mask(pred / "b.png", labels)
        code, stdout, stderr = run_cli([
            "eval", str(pred), str(gt), "--num-classes", "2"
        ], capsys)
        assert code == EXIT_DATA
        assert "b.png" in stderr
        assert stdout.splitlines()[1].split()[-1] == "100.0"  # a.png still counted

    def test_nonexistent_directory_is_data_error(self, tmp_path, capsys):
        code, _, stderr = run_cli(
            ["eval", str(tmp_path / "nope"), str(tmp_path)], capsys
        )
        assert code == EXIT_DATA and "nope" in stderr


class TestUsageErrors:
    @pytest.mark.parametrize(
        "argv",
        [
            [],
            ["frobnicate"],
            ["fuse", "--out", "x"],
            ["fuse", "--manifest", "m.json"],
            ["loss", "--manifest", "m.json", "--variant", "bogus"],
        ],
    )
    def test_bad_invocations_exit_one(self, argv, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(argv)
        assert excinfo.value.code == EXIT_USAGE
        assert "error" in capsys.readouterr().err

    @pytest.mark.parametrize("value", ["0", "-2", "abc"])
    def test_invalid_thread_count_exits_one(self, value, tmp_path, capsys, monkeypatch):
        manifest = build_dataset(tmp_path / "data", ids=("one",), size=12)
        monkeypatch.setenv("MASKCTL_THREADS", value)
        with pytest.raises(SystemExit) as excinfo:
            main(["fuse", "--manifest", str(manifest), "--out", str(tmp_path / "o")])
        assert excinfo.value.code == EXIT_USAGE


class TestConfigFile:
    def test_config_drives_pipeline(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", ids=("one",), size=16)
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "crf": {"iterations": 2},
            "diversity": {"lambda": 0.3, "num_candidates": 2},
        }))
        out = tmp_path / "cands"
        code, stdout, _ = run_cli(
            ["candidates", "--manifest", str(manifest), "--config", str(config),
             "--out", str(out)],
            capsys,
        )
        assert code == EXIT_OK
        assert "candidates=2" in stdout
        meta = json.loads((out / "one" / "meta.json").read_text())
        assert meta["lambda"] == 0.3

    def test_flag_overrides_config(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", ids=("one",), size=16)
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "crf": {"iterations": 2},
            "diversity": {"num_candidates": 2},
        }))
        out = tmp_path / "cands"
        code, stdout, _ = run_cli(
            ["candidates", "--manifest", str(manifest), "--config", str(config),
             "--out", str(out), "--num-candidates", "3"],
            capsys,
        )
        assert code == EXIT_OK and "candidates=3" in stdout
        assert (out / "one" / "candidate_2.png").exists()

    @pytest.mark.parametrize(
        "doc",
        [
            {"sigma": 1.0},
            {"diversity": {"gamma": 2.0}},
            {"loss": {"temperature": 1.0}},
            {"crf": {"bogus": 1.0}},
        ],
    )
    def test_unknown_config_keys_are_data_errors(self, doc, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "data", ids=("one",), size=12)
        config = tmp_path / "config.json"
        config.write_text(json.dumps(doc))
        code, _, stderr = run_cli(
            ["mask", "--manifest", str(manifest), "--config", str(config),
             "--out", str(tmp_path / "o")],
            capsys,
        )
        assert code == EXIT_DATA and stderr != ""


class TestConsoleScript:
    def test_help_exits_zero(self):
        exe = shutil.which("maskctl")
        assert exe is not None, "console script not installed"
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "fuse" in proc.stdout and "candidates" in proc.stdout

    def test_no_arguments_exits_one(self):
        exe = shutil.which("maskctl")
        proc = subprocess.run([exe], capture_output=True, text=True)
        assert proc.returncode == EXIT_USAGE
