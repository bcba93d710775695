"""Synthetic code and controlled mutations for evaluation corpora."""

from __future__ import annotations

import random
import string
from typing import Callable

CODE_ALPHABET = string.ascii_lowercase + string.digits + ";(){}=+"
NOISE_ALPHABET = string.ascii_uppercase + "#@$%"

_SYLLABLES = (
    "ba be bi bo bu ca ce ci co cu da de di do du fa fe fi fo fu ga ge gi go gu ha he hi "
    "ho hu ja je jo ka ke ki ko ku la le li lo lu ma me mi mo mu na ne ni no nu pa pe pi "
    "po pu ra re ri ro ru sa se si so su ta te ti to tu va ve vi vo vu wa we wi xa xe ya "
    "yo za ze zi zo str cnt idx buf len val key map node list item"
).split()

_TYPES = ("int", "long", "String", "double", "boolean", "char", "float", "Object")

COMMON_NAMES = (
    "i j n list result value count temp data index name map key sb str obj item node "
    "size len sum max min input output buffer line reader file args e x y"
).split()
COMMON_METHODS = "get set add put size length append toString equals read close".split()
COMMON_CLASSES = ("List", "Map", "Scanner", "Node", "Reader", "Buffer")

_TEMPLATES = (
    "{t} {v} = {v2} + {n};",
    "{v} = {v2} * {n} - {v3};",
    "for (int {i} = 0; {i} < {v}.length; {i}++) {{",
    "while ({v} != null && {v2} > {n}) {{",
    "if ({v} == {v2}) {{",
    "if ({v}.{m}({v2}) >= {n}) {{",
    "}} else {{",
    "}}",
    "}}",
    "return {v};",
    "{v}.{m}({v2}, {n});",
    "System.out.println(\"{w} \" + {v});",
    "{t}[] {v} = new {t}[{n}];",
    "{c} {v} = new {c}({v2});",
    "try {{",
    "}} catch ({c}Exception {v}) {{",
    "{v}[{i}] = {v2}[{i} + {n}];",
    "{v} += {v2}.{m}();",
    "break;",
    "{v}.add({v2});",
)


def _word(rng: random.Random, syllables: int) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(syllables))


class CodeGenerator:
    """Java-flavoured code from line templates with per-document identifiers.

    Unrelated documents share keywords and idioms the way real code does,
    so their fingerprints overlap a little; identifiers keep them apart.
    """

    def __init__(
        self, rng: random.Random, n_vars: int = 10, n_methods: int = 5, common_ratio: float = 0.5
    ):
        self.rng = rng
        self.n_vars = n_vars
        self.n_methods = n_methods
        self.common_ratio = common_ratio

    def _names(self, own: int, common: tuple[str, ...], make) -> list[str]:
        rng = self.rng
        return [rng.choice(common) if rng.random() < self.common_ratio else make() for _ in range(own)]

    def document(self, n_chars: int) -> str:
        rng = self.rng
        vars_ = self._names(self.n_vars, COMMON_NAMES, lambda: _word(rng, rng.randint(2, 3)))
        methods = self._names(self.n_methods, COMMON_METHODS, lambda: _word(rng, 3))
        classes = self._names(3, COMMON_CLASSES, lambda: _word(rng, 2).capitalize())
        words = [_word(rng, 2) for _ in range(6)]
        head = f"public {rng.choice(_TYPES)} {rng.choice(methods)}({rng.choice(_TYPES)} {vars_[0]}) {{"
        lines = [head]
        depth = 1
        size = len(head)
        while size < n_chars:
            line = rng.choice(_TEMPLATES).format(
                t=rng.choice(_TYPES), v=rng.choice(vars_), v2=rng.choice(vars_),
                v3=rng.choice(vars_), i=rng.choice("ijk"), m=rng.choice(methods),
                c=rng.choice(classes), w=rng.choice(words), n=rng.randint(0, 99),
            )
            if line.startswith("}") and depth <= 1:
                continue  # closers and `} else {` only inside a nested block
            indent = depth - 1 if line.startswith("}") else depth
            if line.endswith("{") and not line.startswith("}"):
                depth += 1
            elif line.startswith("}") and not line.endswith("{"):
                depth -= 1
            line = "    " * indent + line
            lines.append(line)
            size += len(line.strip())
        lines.extend("    " * d + "}" for d in range(depth - 1, -1, -1))
        return "\n".join(lines) + "\n"


def random_string(rng: random.Random, alphabet: str, n: int) -> str:
    return "".join(rng.choice(alphabet) for _ in range(n))


def _composition(rng: random.Random, total: int, parts: int) -> list[int]:
    """Random split of ``total`` into ``parts`` non-negative integers."""
    if parts <= 1:
        return [total]
    cuts = sorted(rng.randint(0, total) for _ in range(parts - 1))
    return [b - a for a, b in zip([0, *cuts], [*cuts, total])]


def significant_positions(text: str) -> list[int]:
    """Indices of the non-whitespace characters, the ones fingerprints see."""
    return [i for i, ch in enumerate(text) if not ch.isspace()]


def replace_regions(
    text: str,
    fraction: float,
    rng: random.Random,
    filler: Callable[[int], str],
    n_regions: int | None = None,
    overlap: bool = False,
) -> str:
    """Overwrite regions totalling ``fraction`` of the non-whitespace characters.

    Whitespace is layout and is left alone; each replaced character is
    swapped one-for-one with a non-whitespace character from ``filler(n)``,
    so line structure and length survive. Region count defaults to a
    uniform draw from 1..10 with lengths partitioned to the total.

    With ``overlap=False`` regions are disjoint and exactly
    ``round(fraction * n)`` characters change position; with ``overlap=True``
    each region starts at an independent uniform offset, so regions may
    cover each other and the changed share is usually smaller.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    sig = significant_positions(text)
    n = len(sig)
    total = round(fraction * n)
    if total == 0:
        return text
    k = n_regions if n_regions is not None else rng.randint(1, 10)
    k = max(1, min(k, total))
    lengths = [x for x in _composition(rng, total, k) if x > 0]
    if overlap:
        starts = [rng.randint(0, n - ln) for ln in lengths]
    else:
        gaps = _composition(rng, n - total, len(lengths) + 1)
        starts, pos = [], 0
        for gap, ln in zip(gaps, lengths):
            pos += gap
            starts.append(pos)
            pos += ln
    chars = list(text)
    for start, ln in zip(starts, lengths):
        fill = "".join(filler(ln).split())
        if len(fill) < ln:
            raise ValueError(f"filler returned {len(fill)} characters, needed {ln}")
        for j in range(ln):
            chars[sig[start + j]] = fill[j]
    return "".join(chars)


def code_filler(gen: CodeGenerator) -> Callable[[int], str]:
    """Filler drawing fresh code from ``gen``, whitespace removed."""

    def fill(n: int) -> str:
        out = ""
        while len(out) < n:
            out += "".join(gen.document(max(n, 200)).split())
        return out[:n]

    return fill


def noise_filler(rng: random.Random, alphabet: str = NOISE_ALPHABET) -> Callable[[int], str]:
    return lambda n: random_string(rng, alphabet, n)
