"""Command-line front end.

Each subcommand reads a JSON config, runs one computation and writes
``<subcommand>.csv`` plus ``manifest.json`` into the output directory.
Exit codes: 0 success, 1 bad input, 2 infeasible model, 3 cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from pathlib import Path

import jsonschema

from . import __version__
from . import factorlab, mahler, markov, microstates, pressure
from .group import Window, ball
from .sofic import (
    SoficMap,
    SoficSequence,
    bs_local_fraction,
    check_multiplicative,
    check_trace,
    cyclic_model,
    expander_witness,
    random_free_model,
)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_CAP = 0, 1, 2, 3
SIG_DIGITS = 9

INFEASIBLE = (pressure.InfeasibleSft, microstates.InfeasibleCounts, markov.InconsistentMarginals)
CAP = (microstates.CapExceeded, pressure.CapExceeded, factorlab.CapExceeded, markov.WindowTooLarge)


class InputError(ValueError):
    pass


# ------------------------------------------------------------------ schemas

_NUM_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_RANK = {"type": "integer", "minimum": 1}

CHAIN = {
    "oneOf": [
        {
            "type": "object",
            "required": ["ising"],
            "properties": {
                "ising": {
                    "type": "object",
                    "required": ["eps"],
                    "properties": {"eps": {"type": "number", "minimum": 0, "maximum": 1}, "rank": _RANK},
                    "additionalProperties": False,
                }
            },
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["iid"],
            "properties": {
                "iid": {
                    "type": "object",
                    "required": ["p"],
                    "properties": {"p": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                                   "rank": _RANK},
                    "additionalProperties": False,
                }
            },
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["tree_lattice"],
            "properties": {"tree_lattice": {"type": "object"}},
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["rank", "alphabet", "pi", "edges"],
            "properties": {
                "rank": _RANK,
                "alphabet": {"type": "array", "minItems": 1},
                "pi": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "edges": {"type": "object", "additionalProperties": _NUM_MATRIX},
            },
            "additionalProperties": False,
        },
    ]
}

MODEL = {
    "oneOf": [
        {
            "type": "object",
            "required": ["kind", "n"],
            "properties": {"kind": {"const": "cyclic"}, "n": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["kind", "n", "rank"],
            "properties": {
                "kind": {"const": "random_free"},
                "n": {"type": "integer", "minimum": 1},
                "rank": _RANK,
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["path"],
            "properties": {"path": {"type": "string"}},
            "additionalProperties": False,
        },
    ]
}

SEQUENCE = {
    "type": "object",
    "required": ["kind", "sizes"],
    "properties": {
        "kind": {"enum": ["cyclic", "random_free"]},
        "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "rank": _RANK,
        "seed": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

POTENTIAL = {
    "oneOf": [
        {
            "type": "object",
            "required": ["ising"],
            "properties": {
                "ising": {
                    "type": "object",
                    "required": ["beta"],
                    "properties": {"beta": {"type": "number"}, "field": {"type": "number"}, "rank": _RANK},
                    "additionalProperties": False,
                }
            },
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["vertex", "edges"],
            "properties": {
                "vertex": {"type": "array", "items": {"type": "number"}},
                "edges": {"type": "object", "additionalProperties": _NUM_MATRIX},
            },
            "additionalProperties": False,
        },
    ]
}

SFT = {
    "oneOf": [
        {
            "type": "object",
            "required": ["mod_n"],
            "properties": {"mod_n": {"type": "integer", "minimum": 2}, "rank": _RANK},
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["alphabet", "allowed"],
            "properties": {
                "alphabet": {"type": "array", "minItems": 1},
                "allowed": {"type": "object", "additionalProperties": _NUM_MATRIX},
            },
            "additionalProperties": False,
        },
    ]
}

_WINDOW = {"type": "array", "items": {"type": "string"}, "minItems": 1}

SCHEMAS = {
    "finv": {
        "type": "object",
        "required": ["chain"],
        "properties": {"chain": CHAIN, "windows": {"type": "array", "items": _WINDOW}},
        "additionalProperties": False,
    },
    "microstates": {
        "type": "object",
        "required": ["target", "sequence", "schedule"],
        "properties": {
            "target": CHAIN,
            "sequence": SEQUENCE,
            "schedule": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "array",
                    "prefixItems": [{"type": "integer", "minimum": 0},
                                    {"type": "number", "exclusiveMinimum": 0, "maximum": 2}],
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
            "method": {"enum": ["exact", "mc"]},
            "samples": {"type": "integer", "minimum": 1},
        },
        "additionalProperties": False,
    },
    "annealed": {
        "type": "object",
        "required": ["chain", "n"],
        "properties": {
            "chain": CHAIN,
            "n": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        },
        "additionalProperties": False,
    },
    "pressure": {
        "type": "object",
        "required": ["potential", "sequence"],
        "properties": {"potential": POTENTIAL, "constraint": {"anyOf": [SFT, {"type": "null"}]}, "sequence": SEQUENCE},
        "additionalProperties": False,
    },
    "sft-maxent": {
        "type": "object",
        "required": ["sft"],
        "properties": {
            "sft": SFT,
            "symmetry": {"enum": ["auto", "none"]},
            "restarts": {"type": "integer", "minimum": 0},
        },
        "additionalProperties": False,
    },
    "mahler": {
        "type": "object",
        "required": ["poly"],
        "properties": {
            "poly": {"type": "string", "minLength": 1},
            "method": {"enum": ["quadrature", "roots"]},
            "grid": {"type": "integer", "minimum": mahler.MIN_GRID},
        },
        "additionalProperties": False,
    },
    "sofic-check": {
        "type": "object",
        "required": ["model"],
        "properties": {
            "model": MODEL,
            "radius": {"type": "integer", "minimum": 1},
            "delta": {"type": "number", "minimum": 0, "maximum": 1},
        },
        "additionalProperties": False,
    },
    "ow-check": {
        "type": "object",
        "required": ["radius"],
        "properties": {"radius": {"type": "integer", "minimum": 0}, "variant": {"type": "boolean"}},
        "additionalProperties": False,
    },
}


def validate(subcommand: str, config: dict) -> None:
    """Raise InputError listing every violation as 'json-pointer: message'."""
    validator = jsonschema.Draft202012Validator(SCHEMAS[subcommand])
    errors = sorted(validator.iter_errors(config), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors:
            # descend into oneOf/anyOf, following the branch that got deepest
            while e.context:
                e = max(e.context, key=lambda c: len(c.absolute_path))
            pointer = "".join(f"/{str(p).replace('~', '~0').replace('/', '~1')}" for p in e.absolute_path)
            lines.append(f"{pointer or '/'}: {e.message}")
        raise InputError("config does not match schema:\n  " + "\n  ".join(lines))


# ---------------------------------------------------------------- builders


def build_chain(d: dict) -> markov.MarkovChainSpec:
    if "ising" in d:
        return markov.ising_chain(d["ising"]["eps"], d["ising"].get("rank", 2))
    if "iid" in d:
        return markov.iid_chain(d["iid"]["p"], d["iid"].get("rank", 2))
    if "tree_lattice" in d:
        return markov.tree_lattice_chain()
    return markov.MarkovChainSpec.from_json(d)


def build_model(d: dict, base: Path) -> SoficMap:
    if "path" in d:
        return SoficMap.load(base / d["path"])
    if d["kind"] == "cyclic":
        return cyclic_model(d["n"])
    return random_free_model(d["rank"], d["n"], d.get("seed", 0))


def build_sequence(d: dict) -> SoficSequence:
    if d["kind"] == "cyclic":
        return SoficSequence.cyclic(d["sizes"])
    return SoficSequence.random_free(d.get("rank", 2), d["sizes"], d.get("seed", 0))


# ------------------------------------------------------------------ output


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return format(x, f".{SIG_DIGITS}g")
    return "" if x is None else str(x)


def config_digest(subcommand: str, config: dict) -> str:
    canon = json.dumps({"subcommand": subcommand, "config": config}, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode("utf-8")).hexdigest()


def write_csv(path: Path, header: list[str], rows: list[list], digest: str) -> None:
    buf = io.StringIO()
    buf.write(f"# config_digest={digest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


# ------------------------------------------------------------- subcommands


def run_finv(cfg, args, base):
    chain = build_chain(cfg["chain"])
    rows = [["f_markov", "", markov.f_markov(chain)]]
    for win in cfg.get("windows", []):
        W = Window.of(win, chain.rank)
        rows.append(["F_window", " ".join(W.strings()), markov.F_window(chain, W)])
    return ["quantity", "window", "f"], rows, {}


def run_microstates(cfg, args, base):
    target = build_chain(cfg["target"])
    seq = build_sequence(cfg["sequence"])
    method = cfg.get("method", "exact")
    table = microstates.sofic_entropy_estimate(
        seq, target, [tuple(x) for x in cfg["schedule"]], method=method,
        samples=cfg.get("samples", 100_000), seed=args.seed, cap_bits=args.cap, threads=args.threads,
    )
    header = ["n", "r", "delta", "log_count", "normalized", "method", "seed", "halfwidth", "local_fraction"]
    rows = []
    for row in table.rows:
        f = row.csv_fields()
        rows.append([f["n"], f["r"], float(f["delta"]),
                     f["log_count"], f["normalized"], f["method"], f["seed"], row.halfwidth, row.local_fraction])
    return header, rows, {}


def run_annealed(cfg, args, base):
    chain = build_chain(cfg["chain"])
    f = markov.f_markov(chain)
    rows = []
    for n in cfg["n"]:
        a = microstates.annealed_count(chain, n)
        rows.append([n, a.log_expected, a.normalized, f, a.normalized - f])
    return ["n", "log_expected", "normalized", "f_markov", "difference"], rows, {}


def run_pressure(cfg, args, base):
    psi = pressure.Potential.from_json(cfg["potential"])
    constraint = pressure.SftSpec.from_json(cfg["constraint"]) if cfg.get("constraint") else None
    table = pressure.pressure_table(build_sequence(cfg["sequence"]), psi, constraint, args.cap)
    return ["n", "log_z", "normalized"], [[r.n, r.log_z, r.normalized] for r in table.rows], {}


def run_sft_maxent(cfg, args, base):
    sft = pressure.SftSpec.from_json(cfg["sft"])
    res = pressure.maxent_markov_on_sft(
        sft, symmetry=cfg.get("symmetry", "auto"), restarts=cfg.get("restarts", 16), seed=args.seed
    )
    rows = [[f"s{i + 1}", a, res.value, res.symmetric, len(res.ties)] for i, a in enumerate(res.alpha)]
    return ["generator", "alpha", "value", "symmetric", "ties"], rows, {}


def run_mahler(cfg, args, base):
    f = mahler.LaurentPoly.parse(cfg["poly"])
    method = cfg.get("method", "roots" if f.d == 1 else "quadrature")
    if method == "roots":
        r = mahler.log_mahler_roots(f)
        resid = float(r.residuals.max()) if len(r.residuals) else 0.0
        row = [str(f), method, r.value, "", "", resid]
    else:
        q = mahler.log_mahler_quadrature(f, cfg.get("grid", 1 << 12))
        row = [str(f), method, q.value, q.excluded, q.low_confidence, ""]
    return ["poly", "method", "value", "excluded", "low_confidence", "max_root_residual"], [row], {}


def run_sofic_check(cfg, args, base):
    sigma = build_model(cfg["model"], base)
    radius, delta = cfg.get("radius", 1), cfg.get("delta", 0.0)
    F = [w for w in ball(radius, sigma.rank) if len(w)]
    tr = check_trace(sigma, F, delta)
    mu = check_multiplicative(sigma, ball(radius, sigma.rank), delta)
    wit = expander_witness(sigma)
    rows = [["trace_passed", tr.passed]]
    rows += [[f"fixed_fraction_{w}", frac] for w, frac in tr.fixed_fraction.items()]
    rows += [
        ["multiplicative_passed", mu.passed],
        ["worst_agreement", mu.worst_agreement],
        ["local_tree_fraction", bs_local_fraction(sigma, radius)],
        ["lambda2", wit.lambda2],
        ["edge_expansion_bound", wit.edge_expansion_bound],
    ]
    return ["quantity", "value"], rows, {}


def run_ow_check(cfg, args, base):
    r = cfg["radius"]
    if cfg.get("variant"):
        report = factorlab.variant_factor_check(r, args.cap).to_json()
    else:
        report = factorlab.ow_report(r, args.cap)
    rows = [[int(size), count] for size, count in report["fiber_histogram"].items()]
    return ["fiber_size", "fiber_count"], rows, {"report.json": report}


RUNNERS = {
    "finv": run_finv,
    "microstates": run_microstates,
    "annealed": run_annealed,
    "pressure": run_pressure,
    "sft-maxent": run_sft_maxent,
    "mahler": run_mahler,
    "sofic-check": run_sofic_check,
    "ow-check": run_ow_check,
}


# -------------------------------------------------------------------- main


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # keep exit code 2 free for infeasible models
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="soficlab", description="Sofic entropy and f-invariant experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--cap", type=int, default=microstates.ENUM_CAP_BITS, help="enumeration cap in bits")
        if name == "mahler":
            sp.add_argument("--poly", help="polynomial such as 'x^2 - x - 1'")
            sp.add_argument("--method", choices=["quadrature", "roots"])
            sp.add_argument("--grid", type=int)
    return p


def load_config(args) -> tuple[dict, Path]:
    cfg: dict = {}
    base = Path(".")
    if args.config is not None:
        try:
            cfg = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        base = args.config.parent
    if args.subcommand == "mahler":
        for key in ("poly", "method", "grid"):
            if getattr(args, key) is not None:
                cfg[key] = getattr(args, key)
    return cfg, base


def run(argv=None) -> int:
    args = make_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        if not 0 <= args.seed < 2**64:
            raise InputError("--seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise InputError("--threads must be positive")
        cfg, base = load_config(args)
        validate(args.subcommand, cfg)
        header, rows, extra = RUNNERS[args.subcommand](cfg, args, base)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except INFEASIBLE as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CAP as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    digest = config_digest(args.subcommand, cfg)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{args.subcommand}.csv"
    write_csv(csv_path, header, rows, digest)
    outputs = [csv_path.name]
    for name, payload in extra.items():
        (out / name).write_text(json.dumps({"config_digest": digest, **payload}, indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
        outputs.append(name)
    manifest = {
        "subcommand": args.subcommand,
        "config_digest": digest,
        "seed": args.seed,
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - start, 6),
        "outputs": outputs,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    sys.stdout.write(csv_path.read_text(encoding="utf-8"))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
