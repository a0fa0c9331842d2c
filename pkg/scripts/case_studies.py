"""Replay the three plant case studies offline and summarize what comes out.

    python3 scripts/case_studies.py [--out runs]

For each scripted plant (Eastman column, DEXPI tank) the generation plan is
replayed against its mock script. The generated interlock and startup
programs are then simulated, and their traces are written next to the run as
CSV.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from pnid2st.genpipe import MockClient, MockScript, Plan, accepted_units, fixed_clock, run_batch
from pnid2st.runtime import Ramp, ScenarioStep, instantiate, run
from pnid2st.st.parser import parse

ROOT = Path(__file__).resolve().parents[1]
TILE = "pid_r0_c0.png"  # detection only records the file name, so the image itself is not needed


def replay(name: str, out: Path):
    plan = Plan.load(ROOT / "plans" / f"{name}.plan")
    client = MockClient(MockScript.load(ROOT / "transcripts" / f"{name}.mock"))
    report = run_batch(plan, client, out / name, tiles=[TILE], clock=fixed_clock())
    print(f"== {name}: {len(report.accepted())}/{len(report.tasks)} tasks accepted")
    for t in report.tasks:
        extra = ""
        if t.elements:
            kinds = {}
            for e in t.elements["elements"]:
                kinds[e["quantity"]] = kinds.get(e["quantity"], 0) + 1
            extra = f" controllers by quantity {dict(sorted(kinds.items()))}"
        elif t.files:
            extra = f" {', '.join(t.files)} ({t.lines} lines, repair rounds: {t.rounds})"
        print(f"  {t.task_id:<22} {t.status:<9}{extra}")
        for w in t.warnings:
            print(f"    warning: {w}")
    return report


def phase_scans(trace, phases):
    return {p: next((i for i, v in enumerate(trace.column(p)) if v), None) for p in phases}


def simulate_cases(out: Path) -> None:
    interlock = parse((ROOT / "fixtures" / "interlock_t4750.st").read_text())
    rt = instantiate(interlock, "Interlock_T4750")
    trace = run(rt, [ScenarioStep(0, 400, {"Level": Ramp(3.0, 0.002)})],
                ["Level", "HighLevelAlarm", "FeedPumpStop"])
    (out / "interlock_t4750.csv").write_text(trace.to_csv())
    alarm = trace.column("HighLevelAlarm").index(True)
    print(f"== interlock T4750: limit {rt.get('HighLevelLimit')} m, alarm and pump stop at scan {alarm} "
          f"(level {trace.column('Level')[alarm]:.3f} m)")

    phases = ["Phase1", "Phase2", "Phase3"]
    for label, path, entry in (("startup", ROOT / "fixtures" / "startup_butane.st", "Startup"),
                               ("parallel draft", ROOT / "tests" / "data" / "startup_parallel_bug.st",
                                "StartupDraft")):
        rt = instantiate(parse(path.read_text()), entry)
        trace = run(rt, (), phases, scans=6000)
        (out / f"{entry}.csv").write_text(trace.to_csv())
        overlap = sum(1 for r in trace.records if sum(r.values) != 1)
        print(f"== {label}: first active scans {phase_scans(trace, phases)}, "
              f"scans without exactly one phase: {overlap}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs", help="output directory (default: runs)")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("eastman", "dexpi"):
        report = replay(name, out)
        assert len(accepted_units(report, out / name)) == sum(len(t.files) for t in report.accepted())
    simulate_cases(out)


if __name__ == "__main__":
    main()
