import json
from pathlib import Path

import pytest

DOMAINS = {
    "HBMS": (
        "A hotel booking system manages hotels, rooms and reservations. Each hotel has a name and a city. "
        "Rooms have a number, a type and a nightly price. Guests book rooms for a date range and pay by card.",
        ["Hotel", "Room", "Reservation", "Guest", "Payment"],
    ),
    "BTMS": (
        "A bus transportation system tracks routes, buses, drivers and schedules. Each route has a number. "
        "Buses have a licence plate and capacity. Drivers are assigned to buses on scheduled days.",
        ["Route", "Bus", "Driver", "Schedule", "Assignment"],
    ),
    "TSS": (
        "A team sports scheduler organises leagues, teams, players and matches between two teams at a venue.",
        ["League", "Team", "Player", "Match", "Venue"],
    ),
}


def ecore(name, classes):
    body = "\n".join(
        f'  <eClassifiers xsi:type="ecore:EClass" name="{c}">\n'
        f'    <eStructuralFeatures xsi:type="ecore:EAttribute" name="{c.lower()}Id" eType="ecore:EDataType EInt"/>\n'
        f'    <eStructuralFeatures xsi:type="ecore:EAttribute" name="{c.lower()}Name" eType="ecore:EDataType EString"/>\n'
        "  </eClassifiers>"
        for c in classes
    )
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<ecore:EPackage xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" '
        f'xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore" name="{name.lower()}" nsURI="http://{name.lower()}">\n'
        f"{body}\n</ecore:EPackage>"
    )


def write_fixture(root: Path, domain_ids=("HBMS", "BTMS"), strategies=("zero-shot", "few-shot", "chain-of-thought"),
                  configurations=None, baseline="default", repetitions=20, backend=None, master_seed=7):
    root.mkdir(parents=True, exist_ok=True)
    domains = []
    for did in domain_ids:
        text, classes = DOMAINS[did]
        (root / f"{did}.txt").write_text(text, encoding="utf-8")
        (root / f"{did}.ecore").write_text(ecore(did, classes) + "\n", encoding="utf-8")
        domains.append({"id": did, "input_text_path": f"{did}.txt", "reference_model_path": f"{did}.ecore"})
    (root / "ex1.ecore").write_text(ecore("library", ["Library", "Book", "Member"]) + "\n", encoding="utf-8")
    (root / "ex2.ecore").write_text(ecore("clinic", ["Clinic", "Doctor", "Patient"]) + "\n", encoding="utf-8")
    manifest = {
        "examples": [
            {
                "description": "A library lends books to members.",
                "steps": "1. Entities: Library, Book, Member.\n2. Attributes: ids and names.\n3. Relations: loans.",
                "model_path": "ex1.ecore",
            },
            {
                "description": "A clinic where doctors treat patients.",
                "steps": "1. Entities: Clinic, Doctor, Patient.\n2. Attributes: ids and names.\n3. Relations: visits.",
                "model_path": "ex2.ecore",
            },
        ]
    }
    (root / "examples.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    if configurations is None:
        configurations = [
            {"id": "S0", "config": {"temperature": 0.5, "top_k": 50, "top_p": 1.0, "max_new_tokens": 4096}},
            {"id": "S1", "config": {"temperature": 0.6, "top_k": 0, "top_p": 0.9, "max_new_tokens": 2048}},
            {"id": baseline, "config": {"temperature": 2.0, "top_k": 50, "top_p": 0.9, "max_new_tokens": 4096}},
        ]
    plan = {
        "plan_id": "fixture",
        "domains": domains,
        "strategies": list(strategies),
        "configurations": configurations,
        "baseline": baseline,
        "repetitions": repetitions,
        "backend": backend or {"kind": "mock-reference", "concurrency_limit": 4, "noise": {"intensity": 0.5}},
        "scorer": {"kind": "surrogate"},
        "examples_manifest": "examples.json",
        "master_seed": master_seed,
    }
    path = root / "plan.json"
    path.write_text(json.dumps(plan, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def plan_path(tmp_path):
    return write_fixture(tmp_path / "fixture")


@pytest.fixture
def make_plan(tmp_path):
    counter = {"n": 0}

    def factory(**kw):
        counter["n"] += 1
        return write_fixture(tmp_path / f"fixture{counter['n']}", **kw)

    return factory


# Acceptance verdicts, printed once per criterion in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
