"""Macro averages over per-task accuracies.

Aggregation is exact (``Fraction``); rounding to three decimals, half-even,
happens only for presentation via :func:`round3`.
"""

from __future__ import annotations

from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from typing import Iterable, Union

from .errors import EmptyList

Number = Union[int, float, str, Decimal, Fraction]


def to_fraction(x: Number) -> Fraction:
    # floats go through repr so 0.914 means 914/1000, not its binary expansion
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def arithmetic_macro(acc: Iterable[Number]) -> Fraction:
    values = [to_fraction(a) for a in acc]
    if not values:
        raise EmptyList("no accuracies to average")
    return sum(values, Fraction(0)) / len(values)


def harmonic_macro(acc: Iterable[Number]) -> Fraction | None:
    """n / sum(1/a); ``None`` when any accuracy is zero."""
    values = [to_fraction(a) for a in acc]
    if not values:
        raise EmptyList("no accuracies to average")
    if any(v == 0 for v in values):
        return None
    return len(values) / sum((1 / v for v in values), Fraction(0))


def round3(x: Number) -> Decimal:
    f = to_fraction(x)
    return (Decimal(f.numerator) / Decimal(f.denominator)).quantize(
        Decimal("0.001"), rounding=ROUND_HALF_EVEN
    )


def fmt3(x: Number | None) -> str:
    return "n/a" if x is None else str(round3(x))


# Per-task accuracies and the printed macro average from the published GPT-4
# and GPT-3.5 result tables, columns in TASK_ORDER. Used to audit the macro
# column against recomputation.
REFERENCE_TABLES: dict[str, dict[str, tuple[tuple[str, ...], str]]] = {
    "gpt-4": {
        "cot": (("0.914", "0.050", "0.762", "0.800", "0.470", "0.685", "0.894"), "0.654"),
        "tot": (("0.942", "0.410", "0.786", "0.716", "0.430", "0.765", "0.815"), "0.725"),
        "analogical": (("0.924", "0.040", "0.735", "0.777", "0.500", "0.614", "0.947"), "0.648"),
        "self_refine": (("0.929", "0.080", "0.764", "0.763", "0.470", "0.872", "0.861"), "0.677"),
        "spp": (("0.929", "0.170", "0.861", "0.763", "0.550", "0.672", "0.874"), "0.688"),
        "step_back": (("0.933", "0.090", "0.787", "0.810", "0.420", "0.809", "0.841"), "0.670"),
        "simtom": (("0.938", "0.040", "0.739", "0.667", "0.590", "0.694", "0.815"), "0.640"),
        "mrp": (("0.921", "0.310", "0.796", "0.797", "0.570", "0.867", "0.854"), "0.772"),
    },
    "gpt-3.5": {
        "cot": (("0.831", "0.030", "0.414", "0.187", "0.610", "0.578", "0.675"), "0.416"),
        "tot": (("0.810", "0.100", "0.155", "0.360", "0.430", "0.797", "0.735"), "0.352"),
        "analogical": (("0.825", "0.060", "0.324", "0.197", "0.660", "0.729", "0.721"), "0.433"),
        "self_refine": (("0.716", "0.030", "0.213", "0.167", "0.650", "0.796", "0.543"), "0.372"),
        "spp": (("0.823", "0.160", "0.536", "0.217", "0.540", "0.684", "0.689"), "0.469"),
        "step_back": (("0.817", "0.010", "0.536", "0.190", "0.570", "0.642", "0.788"), "0.452"),
        "simtom": (("0.586", "0.040", "0.240", "0.177", "0.460", "0.599", "0.503"), "0.315"),
        "mrp": (("0.781", "0.050", "0.346", "0.187", "0.600", "0.759", "0.722"), "0.433"),
    },
}


def audit_reference_tables() -> list[dict]:
    """Rows whose printed macro average differs from the recomputed mean."""
    flags = []
    for table, rows in REFERENCE_TABLES.items():
        for label, (accs, printed) in rows.items():
            recomputed = round3(arithmetic_macro(accs))
            if recomputed != Decimal(printed):
                flags.append({
                    "table": table,
                    "row": label,
                    "printed_macro": printed,
                    "recomputed_arithmetic": str(recomputed),
                    "recomputed_harmonic": fmt3(harmonic_macro(accs)),
                })
    return flags
