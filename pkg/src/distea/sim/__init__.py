"""Deterministic multi-process harness and happens-before oracle."""

from importlib import resources

from .generator import GeneratorParams, random_script_generator
from .oracle import CommEvent, HappensBeforeOracle, oracle_impact_set, sequence_impact_set
from .runner import MEM, TCP, DeadlockError, RunResult, SimulationError, run_scripts
from .script import (
    Accept,
    Connect,
    Enter,
    Recv,
    Return,
    ReturnedInto,
    ScriptedProgram,
    ScriptError,
    Send,
    Spawn,
    parse_script,
    serialize_script,
    validate_program,
    validate_topology,
)

EXAMPLE_SCRIPTS = ("e-server.script", "e-client.script")


def example_e_paths():
    base = resources.files("distea") / "scripts"
    return [base / name for name in EXAMPLE_SCRIPTS]


def example_e() -> list:
    """The two-process client/server example as scripted programs."""
    return [parse_script(p.read_text(), source=p.name) for p in example_e_paths()]
