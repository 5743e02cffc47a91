"""Canonical N-Triples terms and template expansion over CSV rows."""
from __future__ import annotations

from typing import Callable, Mapping, Sequence
from urllib.parse import quote

from planner.rml_model import Reference, TemplateFunction, TermKind
from utils.errors import MissingColumnError

# characters an IRI taken verbatim from a cell may keep
_IRI_SAFE = ":/?#[]@!$&'()*+,;=-._~%"
_LITERAL_ESCAPES = str.maketrans({"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r"})

Row = Sequence[str]
TermFunction = Callable[[Row], "str | None"]


def iri(text: str) -> str:
    return f"<{quote(text, safe=_IRI_SAFE)}>"


def literal(text: str) -> str:
    return '"' + text.translate(_LITERAL_ESCAPES) + '"'


def triple(subject: str, predicate: str, obj: str) -> str:
    return f"{subject} {predicate} {obj} .\n"


def column_index(header: Sequence[str], source: str) -> Callable[[str], int]:
    index = {name: i for i, name in enumerate(header)}

    def lookup(column: str) -> int:
        if column not in index:
            raise MissingColumnError(source, [column])
        return index[column]

    return lookup


def compile_term(term: TemplateFunction, header: Sequence[str], source: str) -> TermFunction:
    """A row -> N-Triples term function; it yields None when a referenced cell is empty."""
    lookup = column_index(header, source)
    if term.kind is TermKind.CONSTANT:
        value = literal(term.parts[0]) if term.literal else iri(term.parts[0])
        return lambda row: value

    if term.kind is TermKind.REFERENCE:
        position = lookup(term.parts[0].column)
        wrap = literal if term.literal else iri

        def reference(row: Row) -> str | None:
            cell = row[position] if position < len(row) else ""
            return wrap(cell) if cell else None

        return reference

    pieces: list[str | int] = [lookup(p.column) if isinstance(p, Reference) else p for p in term.parts]

    def template(row: Row) -> str | None:
        out = []
        for piece in pieces:
            if isinstance(piece, int):
                cell = row[piece] if piece < len(row) else ""
                if not cell:
                    return None
                out.append(quote(cell, safe=""))
            else:
                out.append(piece)
        return "<" + quote("".join(out), safe=_IRI_SAFE) + ">"

    return template


def expand(term: TemplateFunction, values: Mapping[str, str]) -> str | None:
    """Expand a term over a single column -> value mapping."""
    header = list(values)
    return compile_term(term, header, "<row>")([values[c] for c in header])
