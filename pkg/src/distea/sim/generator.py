"""Seeded random multi-process scripts for property campaigns.

Communication is planned globally first: a list of messages in one total
order. Each process performs its sends and receives in that order, which
rules out deadlock (the lowest-numbered unfinished message can always make
progress). Method calls are then generated as random nested call trees and
the communication actions are spliced in between them.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .script import (
    MAIN,
    Accept,
    Connect,
    Enter,
    Recv,
    Return,
    ReturnedInto,
    ScriptedProgram,
    Send,
    Spawn,
)


@dataclass(frozen=True)
class GeneratorParams:
    processes: tuple[int, int] = (2, 4)
    methods: tuple[int, int] = (5, 30)
    messages: tuple[int, int] = (1, 12)
    calls: tuple[int, int] = (4, 40)
    max_depth: int = 5
    max_payload: int = 24
    shared_methods: int = 3
    thread_probability: float = 0.25


def _call_tree(rng: random.Random, pool: list[str], budget: int, depth: int, max_depth: int) -> list:
    """Actions of one call of a random method, spending about ``budget`` calls."""
    m = rng.choice(pool)
    out = [Enter(m)]
    budget -= 1
    while budget > 0 and depth < max_depth and rng.random() < 0.7:
        share = rng.randint(1, budget)
        out += _call_tree(rng, pool, share, depth + 1, max_depth)
        out.append(ReturnedInto(m))
        budget -= share
    if rng.random() < 0.2:
        out.append(ReturnedInto(m))
    out.append(Return(m))
    return out


def _body(rng, pool, budget, max_depth) -> list:
    out = []
    while budget > 0:
        share = rng.randint(1, budget)
        out += _call_tree(rng, pool, share, 1, max_depth)
        budget -= share
    return out


def _splice(rng: random.Random, base: list, extra: list) -> list:
    """Insert ``extra`` into ``base`` in order at random gaps between
    complete actions (any gap keeps call nesting valid)."""
    slots = sorted(rng.randint(0, len(base)) for _ in extra)
    out, j = [], 0
    for i in range(len(base) + 1):
        while j < len(extra) and slots[j] == i:
            out.append(extra[j])
            j += 1
        if i < len(base):
            out.append(base[i])
    return out


def random_script_generator(seed: int, params: GeneratorParams = GeneratorParams()) -> list[ScriptedProgram]:
    rng = random.Random(seed)
    nproc = rng.randint(*params.processes)
    names = [f"P{i}" for i in range(nproc)]
    shared = [f"Lib::f{i}" for i in range(params.shared_methods)]

    # connections: a spanning chain plus a few random extra links
    links = [(names[i - 1], names[i]) for i in range(1, nproc)]
    for _ in range(rng.randint(0, nproc)):
        a, b = rng.sample(names, 2)
        links.append((a, b))
    rng.shuffle(links)

    comm: dict[str, list] = {n: [] for n in names}
    for k, (client, server) in enumerate(links):
        addr = f"addr{k}"
        comm[client].append(Connect(f"c{k}", addr))
        comm[server].append(Accept(f"c{k}", addr))
    # connects never block, so doing them all before any accept avoids cycles
    opens = {
        n: sorted(acts, key=lambda a: not isinstance(a, Connect)) for n, acts in comm.items()
    }
    comm = {n: [] for n in names}

    for _ in range(rng.randint(*params.messages)):
        k = rng.randrange(len(links))
        sender, receiver = links[k] if rng.random() < 0.5 else links[k][::-1]
        size = rng.randint(1, params.max_payload)
        payload = bytes(rng.getrandbits(8) for _ in range(size))
        comm[sender].append(Send(f"c{k}", payload))
        # receiver may read the message in several pieces
        left = size
        while left:
            piece = rng.randint(1, left)
            comm[receiver].append(Recv(f"c{k}", piece))
            left -= piece

    programs = []
    for n in names:
        nmeth = rng.randint(*params.methods)
        own = [f"{n}::m{i}" for i in range(nmeth - 1)]
        pool = own + rng.sample(shared, rng.randint(0, len(shared)))
        main_method = f"{n}::main"
        body = _body(rng, pool, rng.randint(*params.calls), params.max_depth)
        threads = {}
        if rng.random() < params.thread_probability:
            worker = _body(rng, pool, rng.randint(1, 10), params.max_depth)
            threads["worker"] = worker
            body = _splice(rng, body, [Spawn("worker")])
        body = _splice(rng, body, comm[n])
        main = opens[n] + [Enter(main_method)] + body
        main += [Return(main_method)]
        main = _with_main_into(main, main_method)
        programs.append(ScriptedProgram(n, {MAIN: tuple(main), **{k: tuple(v) for k, v in threads.items()}}))
    return programs


def _with_main_into(actions: list, main_method: str) -> list:
    """Add returned-into events for the main method after each top-level
    call returns, as a real call stack would produce."""
    out, depth = [], 0
    for a in actions:
        out.append(a)
        if isinstance(a, Enter):
            depth += 1
        elif isinstance(a, Return):
            depth -= 1
            if depth == 1:
                out.append(ReturnedInto(main_method))
    return out
