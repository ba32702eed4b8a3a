"""Runs the CLI on every shipped config plus edge-case configs, checks exit
codes, validates each report.json against schemas/report.schema.json and
confirms that repeated runs are byte-identical.

usage: validate_reports.py <lottery-cli> <repo-root> <work-dir>
"""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import jsonschema


def run(cli, pipeline, config, out, *extra):
    proc = subprocess.run([cli, pipeline, "--config", str(config), "--out", str(out), *extra],
                          capture_output=True, text=True, timeout=300)
    return proc.returncode, proc.stdout + proc.stderr


def main():
    cli, root, work = sys.argv[1], Path(sys.argv[2]), Path(sys.argv[3])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    validator = jsonschema.Draft202012Validator(json.loads((root / "schemas/report.schema.json").read_text()))
    two = [{"player_id": 1, "coefficient": 1.0}, {"player_id": 2, "coefficient": 1.0}]

    def write(name, body):
        path = work / f"{name}.json"
        path.write_text(json.dumps(body))
        return path

    # (pipeline, config, expected exit code, report expected)
    cases = [
        ("equilibrium", root / "configs/i2_equilibrium.json", 0, True),
        ("analyze", root / "configs/i2_analyze.json", 0, True),
        ("design", root / "configs/i2_design.json", 0, True),
        ("design", root / "configs/i2_design_constrained.json", 0, True),
        ("casestudy", root / "configs/casestudy_ieee30.json", 0, True),
        ("analyze", write("empty_sweep", {"benefits": two, "sweep": {"rewards": []}}), 0, True),
        ("design", write("infeasible", {"benefits": two, "constraints": {
            "source": "inline", "rows": [{"label": "neg", "coefficients": [0, 0, 1], "bound": -1}]}}), 2, True),
        ("casestudy", write("no_grid", {"benefits": two}), 1, True),
        ("equilibrium", write("unknown_key", {"benefits": two, "typo": 1}), 1, False),
        ("equilibrium", write("bad_reward", {"benefits": two, "design_point": {"reward": -1}}), 1, False),
    ]
    failures = []
    for k, (pipeline, config, expected, has_report) in enumerate(cases):
        out = work / f"run{k}"
        code, log = run(cli, pipeline, config, out)
        tag = f"{pipeline} {config.name}"
        if code != expected:
            failures.append(f"{tag}: exit {code}, expected {expected}\n{log}")
            continue
        report = out / "report.json"
        if has_report != report.exists():
            failures.append(f"{tag}: report.json {'missing' if has_report else 'unexpected'}")
            continue
        if has_report:
            errors = sorted(validator.iter_errors(json.loads(report.read_text())), key=lambda e: list(e.path))
            for e in errors:
                failures.append(f"{tag}: {'/'.join(map(str, e.path))}: {e.message}")
            # Rerun into a sibling directory; every artifact must match byte for byte.
            again = work / f"run{k}_again"
            run(cli, pipeline, config, again)
            for f in sorted(out.iterdir()):
                if f.read_bytes() != (again / f.name).read_bytes():
                    failures.append(f"{tag}: {f.name} differs between identical runs")
        print(f"ok   {tag} (exit {code})")

    # Worker count must not change the analyze output.
    base = root / "configs/i2_analyze.json"
    run(cli, "analyze", base, work / "w1", "--workers", "1")
    run(cli, "analyze", base, work / "w4", "--workers", "4")
    for name in ("report.json", "sweep.csv"):
        if (work / "w1" / name).read_bytes() != (work / "w4" / name).read_bytes():
            failures.append(f"analyze: {name} depends on --workers")

    for f in failures:
        print("FAIL", f)
    print(f"{len(cases)} scenarios, {len(failures)} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
