"""Regenerate the scripted mock transcripts and plans from the candidate sources.

    python3 scripts/build_mocks.py

Writes transcripts/{eastman,dexpi}.mock and plans/{eastman,dexpi}.plan.
"""

from __future__ import annotations

import json
from pathlib import Path

from pnid2st.genpipe import MockEntry, MockScript

ROOT = Path(__file__).resolve().parents[1]
FIX = ROOT / "fixtures"


def fenced(code: str, preface: str) -> str:
    return f"{preface}\n\n```iecst\n{code.rstrip()}\n```\n"


EASTMAN_DETECTION = "\n".join(
    [f"- FC-{i} | controller | flow" for i in range(1, 8)]
    + [f"- LC-{i} | controller | level" for i in range(1, 4)]
    + [f"- PC-{i} | controller | pressure" for i in range(1, 3)]
    + [f"- TC-{i} | controller | temperature" for i in range(1, 3)]
) + "\n"

DEXPI_DETECTION = """- TICSA 4750.03 | controller | temperature
- PICSA 4712.02 | controller | pressure
- HS 4750.01 | controller | other
- PI 4712.01 | controller | pressure
"""

# the first interlock answer assigns a REAL expression to an INT output
BROKEN_LINE = ("    LevelPercent := REAL_TO_INT(LIMIT(0.0, LI_E7, 100.0));",
               "    LevelPercent := LIMIT(0.0, LI_E7, 100.0);")


def eastman() -> tuple[MockScript, dict]:
    cascade = (FIX / "cascade_tc1_fc5.st").read_text()
    interlock = (FIX / "eastman" / "interlock_e7.st").read_text()
    startup = (FIX / "eastman" / "startup_column1.st").read_text()
    assert BROKEN_LINE[0] in interlock
    broken = interlock.replace(*BROKEN_LINE)
    conv = "eastman"
    entries = [
        MockEntry("List all controllers", EASTMAN_DETECTION, conversation=conv),
        MockEntry("feedforward cascading loop of TC-1 and FC-5",
                  fenced(cascade, "Here is the function block for the cascade of TC-1 (primary) and FC-5 "
                                  "(secondary)."), conversation=conv),
        MockEntry("provide the interlocks required for E-7",
                  fenced(broken, "Column E-7 needs high and low level trips, a high temperature trip, "
                                 "pressure trips, a reboiler flow trip and an emergency shutdown."),
                  conversation=conv),
        MockEntry("The checker reported errors",
                  fenced(interlock, "LevelPercent is an INT, so the limited level is now converted with "
                                    "REAL_TO_INT."), conversation=conv),
        MockEntry("startup of column 1",
                  fenced(startup, "Startup of column 1 in three steps using the given setpoints."),
                  conversation=conv),
    ]
    plan = {"name": "eastman", "tasks": [
        {"id": "01_detect", "kind": "element_detection", "group": conv, "context": {"scope": "controllers"}},
        {"id": "02_cascade_tc1_fc5", "kind": "control_loop", "group": conv, "targets": ["TC-1", "FC-5"],
         "context": {"structure": "feedforward cascading loop"}},
        {"id": "03_interlock_e7", "kind": "interlock", "group": conv, "targets": ["E-7"],
         "context": {"equipment": "distillation column"}},
        {"id": "04_startup_column1", "kind": "sequence", "group": conv, "targets": ["V-1", "E-19"],
         "context": {"procedure": "startup of column 1",
                     "setpoints": {"feed_opening_pct": 40.0, "sump_level_pct": 50.0, "tray_temp_degC": 95.0}}},
    ]}
    return MockScript(entries, strict=True), plan


def dexpi() -> tuple[MockScript, dict]:
    interlock = (FIX / "interlock_t4750.st").read_text()
    conv = "dexpi"
    entries = [
        MockEntry("List all controllers", DEXPI_DETECTION, conversation=conv),
        MockEntry("provide the interlocks required for T4750",
                  fenced(interlock, "Interlocks for T4750 using the tank height and design pressure."),
                  conversation=conv),
    ]
    plan = {"name": "dexpi", "tasks": [
        {"id": "01_detect", "kind": "element_detection", "group": conv},
        {"id": "02_interlock_t4750", "kind": "interlock", "group": conv, "targets": ["T4750"],
         "context": {"equipment": "tank", "tank_height_m": 4.0, "design_pressure_bar": 6.0}},
    ]}
    return MockScript(entries, strict=True), plan


def main() -> None:
    (ROOT / "transcripts").mkdir(exist_ok=True)
    (ROOT / "plans").mkdir(exist_ok=True)
    for name, build in (("eastman", eastman), ("dexpi", dexpi)):
        script, plan = build()
        (ROOT / "transcripts" / f"{name}.mock").write_text(script.dumps(), encoding="utf-8")
        (ROOT / "plans" / f"{name}.plan").write_text(json.dumps(plan, indent=2) + "\n", encoding="utf-8")
        print(f"{name}: {len(script.entries)} mock entries, {len(plan['tasks'])} tasks")


if __name__ == "__main__":
    main()
