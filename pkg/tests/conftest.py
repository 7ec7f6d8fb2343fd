"""Shared graph cases and a session-scoped computation cache.

The heavy artifacts (type tables, classifications, long DP series) are
computed once per session and shared across test modules; everything is keyed
by case name so acceptance and unit tests agree on inputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pytest

from conewalk.alphabet import involutive_alphabet
from conewalk.cones import assign_types, type_graph, check_irreducible
from conewalk.genfun import StepDistribution, build_system, classify
from conewalk.grammar import all_series_coefficients, build_grammar, dependency_analysis
from conewalk.graphs import (AttachmentSpec, PieceSpec, make_cone_description,
                             make_free_group, make_free_product,
                             make_subgroup_schreier)
from conewalk.walks import WalkSeries, ball_transition_powers, periods

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")

Z2 = [[0, 1], [1, 0]]
Z3 = [[0, 1, 2], [1, 2, 0], [2, 0, 1]]


def halfline_graph():
    alph = involutive_alphabet([("r", "r"), ("s", "s")])
    root = PieceSpec(name="root", vertices=("o",), edges=(("o", "r", "o"),),
                     attachments=(AttachmentSpec(piece="odd",
                                                 edges=(("o", "s", "v"),)),))
    odd = PieceSpec(name="odd", vertices=("v",), edges=(), ports=(("v", "s"),),
                    attachments=(AttachmentSpec(piece="even",
                                                edges=(("v", "r", "w"),)),))
    even = PieceSpec(name="even", vertices=("w",), edges=(), ports=(("w", "r"),),
                     attachments=(AttachmentSpec(piece="odd",
                                                 edges=(("w", "s", "v"),)),))
    return make_cone_description(alph, root, [odd, even])


def z2cubed_r_graph():
    alph = involutive_alphabet([("r", "r"), ("s", "s"), ("t", "t")])
    root = PieceSpec(
        name="root", vertices=("o",), edges=(("o", "r", "o"),),
        attachments=(AttachmentSpec(piece="via_s", edges=(("o", "s", "v"),)),
                     AttachmentSpec(piece="via_t", edges=(("o", "t", "u"),))))
    via_s = PieceSpec(
        name="via_s", vertices=("v",), edges=(), ports=(("v", "s"),),
        attachments=(AttachmentSpec(piece="via_r", edges=(("v", "r", "w"),)),
                     AttachmentSpec(piece="via_t", edges=(("v", "t", "u"),))))
    via_r = PieceSpec(
        name="via_r", vertices=("w",), edges=(), ports=(("w", "r"),),
        attachments=(AttachmentSpec(piece="via_s", edges=(("w", "s", "v"),)),
                     AttachmentSpec(piece="via_t", edges=(("w", "t", "u"),))))
    via_t = PieceSpec(
        name="via_t", vertices=("u",), edges=(), ports=(("u", "t"),),
        attachments=(AttachmentSpec(piece="via_r", edges=(("u", "r", "w"),)),
                     AttachmentSpec(piece="via_s", edges=(("u", "s", "v"),))))
    return make_cone_description(alph, root, [via_s, via_r, via_t])


def tree3_description_graph():
    """The 3-regular tree (Z2*Z2*Z2 Cayley graph) as a piece description."""
    alph = involutive_alphabet([("r", "r"), ("s", "s"), ("t", "t")])

    def piece(entry):
        others = [x for x in "rst" if x != entry]
        return PieceSpec(
            name=f"via_{entry}", vertices=("v",), edges=(),
            ports=((("v", entry)),),
            attachments=tuple(AttachmentSpec(piece=f"via_{o}",
                                             edges=(("v", o, "v"),))
                              for o in others))

    root = PieceSpec(
        name="root", vertices=("o",), edges=(),
        attachments=tuple(AttachmentSpec(piece=f"via_{x}",
                                         edges=(("o", x, "v"),))
                          for x in "rst"))
    return make_cone_description(alph, root, [piece(x) for x in "rst"])


def ladder_graph():
    """Bi-infinite ladder: rails labelled u/d, rungs labelled r.

    Cones have two-vertex boundaries, exercising the multi-vertex
    canonicalization and grammar paths."""
    alph = involutive_alphabet([("u", "d"), ("r", "r")])
    root = PieceSpec(
        name="root", vertices=("L", "R"), edges=(("L", "r", "R"),),
        attachments=(
            AttachmentSpec(piece="up", edges=(("L", "u", "a"), ("R", "u", "b"))),
            AttachmentSpec(piece="down", edges=(("L", "d", "a"), ("R", "d", "b")))))
    up = PieceSpec(
        name="up", vertices=("a", "b"), edges=(("a", "r", "b"),),
        ports=(("a", "u"), ("b", "u")),
        attachments=(AttachmentSpec(piece="up",
                                    edges=(("a", "u", "a"), ("b", "u", "b"))),))
    down = PieceSpec(
        name="down", vertices=("a", "b"), edges=(("a", "r", "b"),),
        ports=(("a", "d"), ("b", "d")),
        attachments=(AttachmentSpec(piece="down",
                                    edges=(("a", "d", "a"), ("b", "d", "b"))),))
    return make_cone_description(alph, root, [up, down])


@dataclass
class GraphCase:
    name: str
    build: object
    mu_weights: dict | None = None      # None -> uniform
    probe_start: int = 4
    probe_step: int = 2
    max_radius: int = 24
    exact_n: int = 20


CASES = {
    "f2": GraphCase("f2", lambda: make_free_group(2)),
    "z": GraphCase("z", lambda: make_free_group(1)),
    "halfline": GraphCase("halfline", halfline_graph),
    "z222": GraphCase("z222", lambda: make_free_product([Z2, Z2, Z2])),
    "xf2a_uniform": GraphCase("xf2a_uniform",
                              lambda: make_subgroup_schreier(2, ["a"])),
    "xf2a_heavy": GraphCase("xf2a_heavy",
                            lambda: make_subgroup_schreier(2, ["a"]),
                            mu_weights={"a": 0.45, "A": 0.45,
                                        "b": 0.05, "B": 0.05}),
    "xz222r": GraphCase("xz222r", z2cubed_r_graph),
    "xf3ab_heavy": GraphCase("xf3ab_heavy",
                             lambda: make_subgroup_schreier(3, ["a", "b"]),
                             mu_weights={"a": 0.23, "A": 0.23, "b": 0.23,
                                         "B": 0.23, "c": 0.04, "C": 0.04},
                             probe_start=3, probe_step=1, exact_n=14),
    "ladder": GraphCase("ladder", ladder_graph),
}

# the six graphs named by the exactness acceptance criterion
ACCEPTANCE_SIX = ["f2", "z", "halfline", "z222", "xf2a_uniform", "xz222r"]


class CaseStore:
    """Session cache: every expensive artifact computed at most once."""

    def __init__(self):
        self._cache: dict = {}

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    def oracle(self, name):
        return self._get(("oracle", name), CASES[name].build)

    def mu(self, name) -> StepDistribution:
        case = CASES[name]

        def build():
            if case.mu_weights is None:
                return StepDistribution.uniform(self.oracle(name).alphabet)
            return StepDistribution(dict(case.mu_weights))

        return self._get(("mu", name), build)

    def table(self, name):
        case = CASES[name]
        return self._get(("table", name), lambda: assign_types(
            self.oracle(name), probe_start=case.probe_start,
            probe_step=case.probe_step, max_radius=case.max_radius))

    def type_graph(self, name):
        return self._get(("tg", name), lambda: type_graph(self.table(name)))

    def grammar(self, name):
        return self._get(("grammar", name),
                         lambda: build_grammar(self.table(name)))

    def dependency(self, name):
        return self._get(("dep", name),
                         lambda: dependency_analysis(self.grammar(name)))

    def system(self, name):
        return self._get(("system", name),
                         lambda: build_system(self.grammar(name), self.mu(name)))

    def classification(self, name):
        def build():
            irreducible, _ = check_irreducible(self.type_graph(name))
            return classify(self.system(name), irreducible=irreducible)

        return self._get(("classification", name), build)

    def periods(self, name):
        return self._get(("periods", name), lambda: periods(
            self.oracle(name), self.oracle(name).root, self.table(name)))

    def ball_series(self, name, n=None) -> WalkSeries:
        n = CASES[name].exact_n if n is None else n

        def build():
            o = self.oracle(name)
            return ball_transition_powers(o, o.root, o.root, o.root, n,
                                          self.mu(name))

        return self._get(("ball_series", name, n), build)

    def pilot_coefficients(self, name, n=400):
        return self._get(("pilot", name, n), lambda: all_series_coefficients(
            self.grammar(name), self.mu(name), n))

    def long_series(self, name, n=5000) -> WalkSeries:
        """Spliced series: ball-exact head, grammar-DP tail, R_mu scaling."""

        def build():
            scale = self.classification(name).R_mu
            full = all_series_coefficients(self.grammar(name), self.mu(name),
                                           n, scale=scale)
            exact = self.ball_series(name)
            values = full[(0, 0, 0)].copy()
            m = exact.n_max
            values[:m + 1] = exact.values * scale ** np.arange(m + 1)
            return WalkSeries(origin=self.oracle(name).root,
                              target=self.oracle(name).root,
                              values=values, scale=scale, exact_upto=m,
                              distance=0)

        return self._get(("long_series", name, n), build)


@pytest.fixture(scope="session")
def store():
    return CaseStore()


def config_path(name: str) -> str:
    return os.path.join(CONFIG_DIR, name + ".toml")
