"""End-to-end checks of the hift CLI: subcommands, files, and exit codes."""

import json
import os
import subprocess
import sys
import tempfile

HIFT = os.environ["HIFT_BIN"]

ARCH = {
    "input": "tokens", "vocab": 12, "seq_len": 6, "width": 8, "hidden_units": 2,
    "hidden_kind": "dense", "head": "classifier", "classes": 2, "dtype": "f32",
}


def run(args, env=None):
    merged = dict(os.environ)
    if env:
        merged.update(env)
    return subprocess.run([HIFT] + args, capture_output=True, text=True, env=merged)


def main():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = {
            "arch": ARCH, "task": "synthetic-classification", "mode": "hift",
            "strategy": "bottom2up", "m": 1, "optimizer": "adamw",
            "batch_size": 8, "steps": 12, "base_lr": 0.01, "num_samples": 64,
        }
        cfg_path = os.path.join(tmp, "cfg.json")
        with open(cfg_path, "w") as f:
            json.dump(cfg, f)

        out_a = os.path.join(tmp, "run_a")
        p = run(["train", "--config", cfg_path, "--out", out_a])
        assert p.returncode == 0, p.stderr
        for name in ("steps.csv", "memory.csv", "report.json"):
            assert os.path.exists(os.path.join(out_a, name)), name
        with open(os.path.join(out_a, "steps.csv")) as f:
            lines = [l for l in f.read().splitlines() if l]
        assert len(lines) == cfg["steps"] + 1  # header + T rows

        # the output directory env var is honored when --out is absent
        env_dir = os.path.join(tmp, "env_out")
        p = run(["train", "--config", cfg_path], env={"HIFT_OUTPUT_DIR": env_dir})
        assert p.returncode == 0, p.stderr
        assert os.path.exists(os.path.join(env_dir, "report.json"))

        # fpft counterpart and comparison
        cfg["mode"] = "fpft"
        with open(cfg_path, "w") as f:
            json.dump(cfg, f)
        out_b = os.path.join(tmp, "run_b")
        p = run(["train", "--config", cfg_path, "--out", out_b])
        assert p.returncode == 0, p.stderr

        cmp_out = os.path.join(tmp, "cmp")
        p = run(["compare", os.path.join(out_a, "report.json"),
                 os.path.join(out_b, "report.json"), "--out", cmp_out])
        assert p.returncode == 0, p.stderr
        assert "final_loss" in p.stdout
        assert os.path.exists(os.path.join(cmp_out, "loss_a.csv"))
        assert os.path.exists(os.path.join(cmp_out, "loss_b.csv"))

        # estimate subcommand
        arch_path = os.path.join(tmp, "arch.json")
        with open(arch_path, "w") as f:
            json.dump(ARCH, f)
        p = run(["estimate", "--arch", arch_path, "--optimizer", "adamw", "--m", "1",
                 "--precision", "fp32"])
        assert p.returncode == 0, p.stderr
        assert "hierarchical fine-tuning" in p.stdout

        p = run(["estimate", "--arch", arch_path, "--optimizer", "adafactor", "--m", "2",
                 "--precision", "mixed"])
        assert p.returncode == 0, p.stderr
        assert "master copies" in p.stdout

        # config errors exit 2
        bad_path = os.path.join(tmp, "bad.json")
        bad = dict(cfg)
        bad["m"] = 99
        with open(bad_path, "w") as f:
            json.dump(bad, f)
        p = run(["train", "--config", bad_path, "--out", os.path.join(tmp, "x")])
        assert p.returncode == 2, (p.returncode, p.stderr)

        with open(bad_path, "w") as f:
            f.write("{ not json")
        p = run(["train", "--config", bad_path, "--out", os.path.join(tmp, "x")])
        assert p.returncode == 2, (p.returncode, p.stderr)

        # divergence exits 3 and names the step
        div = {
            "arch": {"input": "vector", "in_dim": 4, "width": 8, "hidden_units": 2,
                     "hidden_kind": "dense", "head": "regressor", "out_dim": 1,
                     "dtype": "f64"},
            "task": "synthetic-regression", "mode": "fpft", "m": 4,
            "optimizer": "sgd", "batch_size": 8, "steps": 40, "base_lr": 1e12,
            "num_samples": 64,
        }
        div_path = os.path.join(tmp, "div.json")
        with open(div_path, "w") as f:
            json.dump(div, f)
        p = run(["train", "--config", div_path, "--out", os.path.join(tmp, "y")])
        assert p.returncode == 3, (p.returncode, p.stderr)
        assert "step" in p.stderr

    print("cli tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
