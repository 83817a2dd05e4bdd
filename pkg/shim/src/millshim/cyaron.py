"""Vendored stand-in for the input-data generation toolkit.

Generated utility functions are written against the toolkit's API
(``import cyaron as cy``); this module pins the slice of it they rely on so
they run offline inside the shim. Everything draws from the process-global
``random`` module, which the shim seeds per request, so equal seeds produce
equal inputs.

Covered: randint/uniform/choice/shuffle helpers, ``Vector.random``,
``String.random``/``String.random_sentence``, ``Sequence``, and a minimal
``Graph`` with ``graph``/``tree`` constructors whose ``to_str`` emits one
"u v" edge per line.
"""

from __future__ import annotations

import random as _random
import string as _string

ALPHABET_SMALL = _string.ascii_lowercase
ALPHABET_CAPITAL = _string.ascii_uppercase
ALPHABET = ALPHABET_SMALL + ALPHABET_CAPITAL
NUMBERS = _string.digits


def randint(a, b):
    return _random.randint(a, b)


def uniform(a, b):
    return _random.uniform(a, b)


def choice(seq):
    return _random.choice(seq)


def shuffle(seq):
    _random.shuffle(seq)
    return seq


def _as_range(bound):
    if isinstance(bound, (tuple, list)):
        low, high = bound
        return int(low), int(high)
    return 1, int(bound)


class Vector:
    @staticmethod
    def random(num=5, position_range=None, mode=0):
        """num rows, one column per position_range entry (cyaron layout).

        mode 0 allows repeats, mode 1 draws distinct single-column values,
        mode 2 produces floats.
        """
        ranges = [_as_range(r) for r in (position_range or [(0, 10)])]
        if mode == 1 and len(ranges) == 1:
            low, high = ranges[0]
            population = range(low, high + 1)
            return [[v] for v in _random.sample(population, num)]
        rows = []
        for _ in range(num):
            if mode == 2:
                rows.append([_random.uniform(low, high) for low, high in ranges])
            else:
                rows.append([_random.randint(low, high) for low, high in ranges])
        return rows


class String:
    @staticmethod
    def random(length, charset=ALPHABET_SMALL):
        if isinstance(length, (tuple, list)):
            length = _random.randint(int(length[0]), int(length[1]))
        return "".join(_random.choice(charset) for _ in range(int(length)))

    @staticmethod
    def random_sentence(word_count, charset=ALPHABET_SMALL, word_length=(1, 8)):
        return " ".join(
            String.random(_random.randint(word_length[0], word_length[1]), charset)
            for _ in range(int(word_count))
        )


class Sequence:
    """Lazy f(i) sequence; mirrors the toolkit's formula-driven generator."""

    def __init__(self, formula, initial_values=()):
        self.formula = formula
        self.values = dict(enumerate(initial_values))

    def get(self, left, right=None):
        if right is None:
            if left not in self.values:
                self.values[left] = self.formula(left, self.get)
            return self.values[left]
        return [self.get(i) for i in range(left, right + 1)]


class Graph:
    def __init__(self, point_count, directed=False):
        self.point_count = point_count
        self.directed = directed
        self.edges: list[tuple[int, int, int]] = []

    def add_edge(self, u, v, weight=None):
        self.edges.append((u, v, weight))

    def to_str(self, shuffle_edges=False, output_weight=False):
        edges = list(self.edges)
        if shuffle_edges:
            _random.shuffle(edges)
        lines = []
        for u, v, w in edges:
            if output_weight and w is not None:
                lines.append(f"{u} {v} {w}")
            else:
                lines.append(f"{u} {v}")
        return "\n".join(lines)

    __str__ = to_str

    @staticmethod
    def graph(point_count, edge_count, weight_limit=0, self_loop=True, repeated_edges=True):
        g = Graph(point_count)
        seen = set()
        while len(g.edges) < edge_count:
            u = _random.randint(1, point_count)
            v = _random.randint(1, point_count)
            if not self_loop and u == v:
                continue
            if not repeated_edges:
                key = (min(u, v), max(u, v))
                if key in seen:
                    continue
                seen.add(key)
            w = _random.randint(1, weight_limit) if weight_limit else None
            g.add_edge(u, v, w)
        return g

    @staticmethod
    def tree(point_count, weight_limit=0):
        g = Graph(point_count)
        for v in range(2, point_count + 1):
            u = _random.randint(1, v - 1)
            w = _random.randint(1, weight_limit) if weight_limit else None
            g.add_edge(u, v, w)
        return g
