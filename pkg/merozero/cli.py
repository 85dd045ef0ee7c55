import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from merozero.analysis.contour_oracle import direct_zero_power_sum, find_zeros_in_disk
from merozero.analysis.kernel_model import (
    KernelSpec,
    check_hypotheses,
    expand_poles,
    load_spec,
    spec_to_dict,
)
from merozero.analysis.nevanlinna import (
    characteristic,
    convergence_index,
    order_from_samples,
    write_samples_csv,
)
from merozero.analysis.power_sums import ZeroTarget, first_admissible_order, zero_power_sums
from merozero.analysis.zero_criterion import classify_squared, classify_unit_weight, residuals
from merozero.base import (
    MerozeroError,
    SpecValidationError,
    TruncationPolicy,
    ValueWithError,
)

COMMANDS = ("report", "zeros", "criterion", "oracle", "nevanlinna", "classify")
FORMATS = ("text", "json", "csv")
DEFAULT_N_MAX = 8
DEFAULT_TOLERANCE = 1e-9
RADIUS_TERMS = 16
NEVANLINNA_POINTS = 10


@dataclass
class RunConfig:
    command: str
    spec_path: str
    n_max: int = DEFAULT_N_MAX
    radius: Optional[float] = None
    tolerance: float = DEFAULT_TOLERANCE
    output_format: str = "text"
    output_path: Optional[str] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"Unknown command {self.command!r}")
        if self.output_format not in FORMATS:
            raise ValueError(f"Unknown format {self.output_format!r}")
        if self.n_max < 0:
            raise ValueError(f"--n-max must be non-negative, got {self.n_max}")
        if not self.tolerance > 0:
            raise ValueError(f"--tol must be positive, got {self.tolerance}")
        if self.radius is not None and not self.radius > 0:
            raise ValueError(f"--radius must be positive, got {self.radius}")


@dataclass
class Section:
    """One command's artifact: a JSON-ready document and its CSV rows."""

    name: str
    document: Dict[str, Any]
    header: Tuple[str, ...]
    rows: List[Tuple[Any, ...]] = field(default_factory=list)


def _real(x) -> Optional[float]:
    x = float(x)
    return x if math.isfinite(x) else None


def _pair(z) -> List[float]:
    z = complex(z)
    return [z.real, z.imag]


def _entry(value: ValueWithError) -> Dict[str, Any]:
    return {
        "value": _pair(value.value),
        "error": value.error_bound,
        "order_dependent": value.order_dependent,
    }


def default_radius(spec: KernelSpec, policy: Optional[TruncationPolicy] = None) -> float:
    """2 max|t_k| over the first few poles."""
    count = RADIUS_TERMS if spec.term_count is None else min(RADIUS_TERMS, spec.term_count)
    return 2 * max(abs(term.pole) for term in expand_poles(spec, count, policy))


def zeros_section(spec, config, policy, rho) -> Section:
    section = Section(
        "zeros", {"rho_estimate": _real(rho), "tables": {}}, ("target", "N", "re", "im", "error")
    )
    targets = [ZeroTarget.F] + ([ZeroTarget.FPRIME] if spec.kernel_order == 1 else [])
    for target in targets:
        table = zero_power_sums(spec, config.n_max, rho, policy, target)
        section.document["tables"][target.value] = {
            "entries": {str(N): _entry(v) for N, v in table.entries.items()},
            "skipped": list(table.skipped),
        }
        for N, v in table.entries.items():
            section.rows.append((target.value, N, v.value.real, v.value.imag, v.error_bound))
    return section


def criterion_section(spec, config, policy, rho) -> Section:
    report = residuals(spec, config.n_max, rho, policy, config.tolerance)
    section = Section(
        "criterion",
        {
            "decision": report.decision.value,
            "witness": report.witness,
            "n_range": list(report.n_range),
            "residuals": {str(N): _entry(r) for N, r in report.residuals.items()},
        },
        ("N", "re", "im", "error", "exceeds"),
    )
    for N, r in report.residuals.items():
        section.rows.append((N, r.value.real, r.value.imag, r.error_bound, r.exceeds_bound()))
    return section


def oracle_section(spec, config, policy, rho) -> Section:
    radius = config.radius or default_radius(spec, policy)
    zero_list = find_zeros_in_disk(spec, radius, policy)
    formula = zero_power_sums(spec, config.n_max, rho, policy).entries
    direct, deltas = {}, {}
    for N in range(first_admissible_order(rho), config.n_max + 1):
        total = direct_zero_power_sum(zero_list, N)
        direct[str(N)] = {
            "value": _pair(total.value),
            "error": total.error_bound,
            "incomplete": total.incomplete,
        }
        if N in formula:
            deltas[str(N)] = _pair(formula[N].value - total.value)
    section = Section(
        "oracle",
        {
            "radius": radius,
            "exhaustive": zero_list.exhaustive_in is not None,
            "zeros": [
                {
                    "location": _pair(entry.location),
                    "multiplicity": entry.multiplicity,
                    "refinement_error": entry.refinement_error,
                }
                for entry in zero_list.zeros
            ],
            "direct_sums": direct,
            "formula_minus_direct": deltas,
        },
        ("re", "im", "multiplicity", "refinement_error"),
    )
    for entry in zero_list.zeros:
        section.rows.append(
            (entry.location.real, entry.location.imag, entry.multiplicity, entry.refinement_error)
        )
    return section


def nevanlinna_section(spec, config, policy, rho) -> Section:
    radius = config.radius or default_radius(spec, policy)
    grid = np.geomspace(radius / 1000, radius, NEVANLINNA_POINTS)
    samples = [characteristic(spec, r, policy) for r in grid]
    order = order_from_samples(samples)
    section = Section(
        "nevanlinna",
        {
            "samples": [
                {"r": s.r, "n": s.n_r, "N": s.N_r, "m": s.m_r, "T": s.T_r} for s in samples
            ],
            "order": {
                "rho": _real(order.rho),
                "lower_order": order.lower_order,
                "fit_window": list(order.fit_window),
                "regression_residual": _real(order.regression_residual),
                "rho_infinite": order.rho_infinite,
            },
            "convergence_index": _real(rho),
        },
        ("r", "n", "N", "m", "T"),
    )
    section.rows = [(s.r, s.n_r, s.N_r, s.m_r, s.T_r) for s in samples]
    section.document["_samples"] = samples
    return section


def classify_section(spec, config, policy, rho) -> Section:
    if spec.kernel_order == 1:
        name, result = "unit-weight", classify_unit_weight(spec, policy, config.tolerance)
    else:
        name, result = "squared", classify_squared(spec, policy, config.tolerance)
    parameter = None if result.parameter is None else _pair(result.parameter)
    section = Section(
        "classify",
        {
            "classifier": name,
            "verdict": result.verdict.value,
            "parameter": parameter,
            "max_residual": result.max_residual,
            "residual_bound": result.residual_bound,
        },
        ("classifier", "verdict", "param_re", "param_im", "max_residual"),
    )
    param = parameter or [None, None]
    section.rows.append((name, result.verdict.value, param[0], param[1], result.max_residual))
    return section


SECTIONS = {
    "zeros": zeros_section,
    "criterion": criterion_section,
    "oracle": oracle_section,
    "nevanlinna": nevanlinna_section,
    "classify": classify_section,
}


def report_sections(spec, config, policy, rho) -> List[Section]:
    """Every analysis; a failing section is recorded instead of aborting the report."""
    sections = []
    for name, build in SECTIONS.items():
        try:
            sections.append(build(spec, config, policy, rho))
        except MerozeroError as error:
            logging.warning(f"Section {name} skipped: {error}")
            sections.append(Section(name, {"skipped": str(error)}, ()))
    return sections


def _flatten(prefix: str, value: Any) -> List[Tuple[str, Any]]:
    if isinstance(value, dict):
        items = []
        for key in sorted(value):
            items.extend(_flatten(f"{prefix}.{key}" if prefix else str(key), value[key]))
        return items
    if isinstance(value, list) and value and isinstance(value[0], dict):
        items = []
        for i, item in enumerate(value):
            items.extend(_flatten(f"{prefix}.{i}", item))
        return items
    return [(prefix, json.dumps(value))]


def _public(document: Dict[str, Any]) -> Dict[str, Any]:
    return {key: value for key, value in document.items() if not key.startswith("_")}


def render_json(config: RunConfig, spec: KernelSpec, sections: Sequence[Section]) -> str:
    doc = {
        "command": config.command,
        "spec": spec_to_dict(spec),
        "sections": {section.name: _public(section.document) for section in sections},
    }
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def render_csv(config: RunConfig, sections: Sequence[Section]) -> str:
    stream = io.StringIO()
    if config.command == "nevanlinna":
        write_samples_csv(sections[0].document["_samples"], stream)
        return stream.getvalue()
    writer = csv.writer(stream, lineterminator="\n")
    if config.command == "report":
        writer.writerow(("section", "key", "value"))
        for section in sections:
            for key, value in _flatten("", _public(section.document)):
                writer.writerow((section.name, key, value))
        return stream.getvalue()
    section = sections[0]
    writer.writerow(section.header)
    for row in section.rows:
        writer.writerow(["%.17g" % v if isinstance(v, float) else v for v in row])
    return stream.getvalue()


def _text_lines(value: Any, indent: int = 0) -> List[str]:
    pad = "  " * indent
    if isinstance(value, dict):
        lines = []
        for key, item in value.items():
            if isinstance(item, (dict, list)) and item and not _is_pair(item):
                lines.append(f"{pad}{key}:")
                lines.extend(_text_lines(item, indent + 1))
            else:
                lines.append(f"{pad}{key}: {_text_scalar(item)}")
        return lines
    if isinstance(value, list):
        lines = []
        for item in value:
            lines.append(f"{pad}-")
            lines.extend(_text_lines(item, indent + 1))
        return lines
    return [f"{pad}{_text_scalar(value)}"]


def _is_pair(value: Any) -> bool:
    return isinstance(value, list) and len(value) == 2 and all(
        isinstance(v, float) for v in value
    )


def _text_scalar(value: Any) -> str:
    if _is_pair(value):
        return f"{complex(value[0], value[1]):.12g}"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def render_text(config: RunConfig, sections: Sequence[Section]) -> str:
    lines = [f"merozero {config.command}: {config.spec_path}"]
    for section in sections:
        lines.append("")
        lines.append(f"[{section.name}]")
        lines.extend(_text_lines(_public(section.document), 1))
    return "\n".join(lines) + "\n"


def run(config: RunConfig, policy: Optional[TruncationPolicy] = None) -> int:
    """Run one command; 0 on success, 2 for spec or hypothesis failures, 3 for numeric ones."""
    policy = policy or TruncationPolicy()
    try:
        spec = load_spec(config.spec_path)
        check_hypotheses(spec, policy)
        rho = convergence_index(spec.poles)
        logging.info(f"Loaded {config.spec_path} with convergence index {rho:g}")
        if config.command == "report":
            sections = report_sections(spec, config, policy, rho)
        else:
            sections = [SECTIONS[config.command](spec, config, policy, rho)]
    except SpecValidationError as error:
        print(f"merozero: {error}", file=sys.stderr)
        return 2
    except MerozeroError as error:
        print(f"merozero: {error}", file=sys.stderr)
        return 3

    if config.output_format == "json":
        artifact = render_json(config, spec, sections)
    elif config.output_format == "csv":
        artifact = render_csv(config, sections)
    else:
        artifact = render_text(config, sections)

    if config.output_path:
        with open(config.output_path, "w") as handle:
            handle.write(artifact)
        logging.info(f"Wrote {config.output_path}")
    else:
        sys.stdout.write(artifact)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="merozero", description="Power sums of zeros of Cauchy-kernel sums"
    )
    parser.add_argument("command", choices=COMMANDS, help="Analysis to run")
    parser.add_argument("--spec", type=str, required=True, help="Path to a spec JSON document")
    parser.add_argument(
        "--n-max", type=int, default=DEFAULT_N_MAX, help="Largest order N to tabulate"
    )
    parser.add_argument(
        "--radius",
        type=float,
        default=None,
        help="Disk radius for oracle and nevanlinna (default: twice the 16th pole modulus)",
    )
    parser.add_argument(
        "--tol", type=float, default=DEFAULT_TOLERANCE, help="Relative tolerance for decisions"
    )
    parser.add_argument("--format", choices=FORMATS, default="text", help="Output format")
    parser.add_argument("--out", type=str, default=None, help="Write the artifact to this path")
    parser.add_argument(
        "--log_level",
        type=str,
        default=os.getenv("MEROZERO_LOG_LEVEL", "WARNING"),
        help="The log level",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None):  # pragma: no cover
    """
    `python -m merozero` and `$ merozero`.
    Parses the command line, configures logging on stderr, builds the truncation policy from the
    environment (and any .env file) and exits with the status of ``run``.
    """

    load_dotenv()  # Load environment variables from .env file

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        config = RunConfig(
            command=args.command,
            spec_path=args.spec,
            n_max=args.n_max,
            radius=args.radius,
            tolerance=args.tol,
            output_format=args.format,
            output_path=args.out,
        )
        policy = TruncationPolicy.from_env()
    except ValueError as error:
        parser.error(str(error))
    sys.exit(run(config, policy))
