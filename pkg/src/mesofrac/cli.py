"""Batch command-line front end chaining the dataset pipeline.

Subcommands: generate, rasterize, simulate, postprocess, ingest-fe,
evaluate, plot. Every failure exits non-zero with a single
machine-parseable ``ERROR[kind]: message`` line on stderr (exit codes:
0 ok, 2 config error, 3 numerical failure, 4 IO error). ``MESOFRAC_THREADS``
caps the BLAS/OpenMP thread pools used by the solver.

Heavy imports happen inside the command handlers so that the thread cap can
be applied before numpy is first loaded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_cap() -> None:
    cap = os.environ.get("MESOFRAC_THREADS")
    if cap:
        for var in _THREAD_ENV_VARS:
            os.environ.setdefault(var, cap)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class Manifest:
    """Per-sample bookkeeping: config hashes, stage status, output hashes."""

    def __init__(self, path: Path):
        from . import __version__

        self.path = path
        if path.exists():
            self.doc = json.loads(path.read_text(encoding="utf-8"))
        else:
            self.doc = {
                "tool_version": __version__,
                "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                "config_hashes": {},
                "stages": {},
                "outputs": {},
            }

    def stage_is_current(self, name: str, inputs: dict[str, str]) -> bool:
        stage = self.doc["stages"].get(name)
        if not stage or stage.get("status") != "done":
            return False
        if stage.get("inputs") != inputs:
            return False
        for rel, digest in stage.get("outputs", {}).items():
            out = self.path.parent / rel
            if not out.exists() or _sha256(out) != digest:
                return False
        return True

    def record_stage(self, name: str, inputs: dict[str, str], outputs: list[Path]) -> None:
        out_hashes = {p.name: _sha256(p) for p in outputs}
        self.doc["stages"][name] = {
            "status": "done",
            "inputs": inputs,
            "outputs": out_hashes,
        }
        self.doc["outputs"].update(out_hashes)
        self.doc["updated"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        self.save()

    def save(self) -> None:
        _write_atomic(self.path, json.dumps(self.doc, indent=1, sort_keys=True) + "\n")


def _load_json_config(path: str | None) -> dict:
    if path is None:
        return {}
    from .errors import ParseError

    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p}: line {exc.lineno}: {exc.msg}") from exc


def _grid_from_args(args) -> "object":
    from .raster import GridSpec

    doc = _load_json_config(getattr(args, "grid", None))
    grid = GridSpec(
        n_cells=int(doc.get("n_cells", 333)),
        domain_length=float(doc.get("domain_length", 50.0)),
    )
    grid.validate()
    return grid


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def _generate_one(task: tuple[str, int, int, dict]) -> str:
    out_dir, index, base_seed, config_doc = task
    from .geometry import config_from_dict, generate_mesostructure, serialize_mesostructure

    doc = dict(config_doc)
    doc["seed"] = (base_seed + index) % 2**63
    config = config_from_dict(doc)
    meso = generate_mesostructure(config)

    sample_dir = Path(out_dir) / f"{index + 1:06d}"
    sample_dir.mkdir(parents=True, exist_ok=True)
    meso_path = sample_dir / "mesostructure.json"
    _write_atomic(meso_path, serialize_mesostructure(meso) + "\n")

    manifest = Manifest(sample_dir / "manifest.json")
    manifest.doc["seed"] = doc["seed"]
    manifest.doc["config_hashes"]["geometry"] = _hash_text(
        json.dumps(doc, sort_keys=True)
    )
    manifest.record_stage("generate", {"seed": str(doc["seed"])}, [meso_path])
    return str(meso_path)


def cmd_generate(args) -> int:
    config_doc = _load_json_config(args.config)
    if args.seed is not None:
        base_seed = args.seed
    else:
        base_seed = int(config_doc.get("seed", 0))
    config_doc.pop("seed", None)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(str(out_dir), i, base_seed, config_doc) for i in range(args.count)]
    if args.jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for path in pool.map(_generate_one, tasks):
                print(path)
    else:
        for task in tasks:
            print(_generate_one(task))
    return 0


# ---------------------------------------------------------------------------
# rasterize
# ---------------------------------------------------------------------------


def cmd_rasterize(args) -> int:
    from .geometry import parse_mesostructure
    from .raster import (
        DEFAULT_MATERIALS,
        assign_materials,
        materials_from_dict,
        rasterize,
        write_pgm16,
    )

    meso_path = Path(args.input)
    if not meso_path.exists():
        raise FileNotFoundError(f"mesostructure file not found: {meso_path}")
    meso = parse_mesostructure(meso_path.read_text(encoding="utf-8"))
    grid = _grid_from_args(args)
    materials_doc = _load_json_config(args.materials)
    table = materials_from_dict(materials_doc) if materials_doc else DEFAULT_MATERIALS

    phase = rasterize(meso, grid)
    maps = assign_materials(phase, table)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for name, field_map in (
        ("phase", phase),
        ("E", maps.E_map),
        ("nu", maps.nu_map),
        ("Gc", maps.Gc_map),
        ("sigma_u", maps.sigma_u_map),
    ):
        path = out_dir / f"{name}.pgm"
        write_pgm16(path, field_map.astype(float))
        outputs.append(path)

    manifest = Manifest(out_dir / "manifest.json")
    manifest.record_stage("rasterize", {"mesostructure": _sha256(meso_path)}, outputs)
    for path in outputs:
        print(path)
    return 0


# ---------------------------------------------------------------------------
# simulate / postprocess
# ---------------------------------------------------------------------------


def _save_raw(path: Path, result) -> None:
    import numpy as np

    frames = result.frames
    np.savez_compressed(
        path,
        steps=np.array([f.step for f in frames], dtype=np.int64),
        frame_converged=np.array([f.converged for f in frames], dtype=bool),
        eps_x=np.stack([f.eps_x for f in frames]),
        eps_y=np.stack([f.eps_y for f in frames]),
        sig_x=np.stack([f.sig_x for f in frames]),
        sig_y=np.stack([f.sig_y for f in frames]),
        phi=np.stack([f.phi for f in frames]),
        strain=result.strain,
        stress=result.stress,
        converged=result.converged,
        E_map=result.maps.E_map,
        sigma_u_map=result.maps.sigma_u_map,
        Gc_map=result.maps.Gc_map,
        phase=result.maps.phase,
        failed=np.array(result.failed),
        failure_message=np.array(result.failure_message),
    )


def _postprocess_raw(raw_path: Path, out_dir: Path, metadata: dict) -> list[Path]:
    import numpy as np

    from .postproc import (
        DatasetTensor,
        StressStrainCurve,
        CHANNELS,
        curve_to_csv,
        write_tensor,
    )

    raw = np.load(raw_path, allow_pickle=False)
    n_frames = raw["phi"].shape[0]
    n = raw["phi"].shape[1]
    data = np.empty((n_frames, len(CHANNELS), n, n), dtype=np.float32)
    data[:, 0] = raw["E_map"].astype(np.float32)
    data[:, 1] = raw["sigma_u_map"].astype(np.float32)
    data[:, 2] = raw["Gc_map"].astype(np.float32)
    data[:, 3] = raw["eps_x"]
    data[:, 4] = raw["eps_y"]
    data[:, 5] = raw["sig_x"]
    data[:, 6] = raw["sig_y"]
    data[:, 7] = raw["phi"]
    tensor = DatasetTensor(data=data)

    tensor_path = out_dir / "tensor.bin"
    write_tensor(tensor_path, tensor, metadata=metadata)
    curve = StressStrainCurve(strain=raw["strain"], stress=raw["stress"])
    curve_path = out_dir / "curve.csv"
    _write_atomic(curve_path, curve_to_csv(curve, converged=raw["converged"]))
    return [tensor_path, Path(str(tensor_path) + ".json"), curve_path]


def cmd_simulate(args) -> int:
    from .errors import SolverFailureError
    from .geometry import parse_mesostructure
    from .raster import DEFAULT_MATERIALS, materials_from_dict, materials_to_dict
    from .solver import config_from_dict, run_simulation

    meso_path = Path(args.input)
    if not meso_path.exists():
        raise FileNotFoundError(f"mesostructure file not found: {meso_path}")
    out_dir = Path(args.out_dir) if args.out_dir else meso_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)

    grid = _grid_from_args(args)
    solver_doc = _load_json_config(args.solver_config)
    config = config_from_dict(solver_doc)
    materials_doc = _load_json_config(args.materials)
    table = materials_from_dict(materials_doc) if materials_doc else DEFAULT_MATERIALS

    inputs = {
        "mesostructure": _sha256(meso_path),
        "grid": _hash_text(json.dumps({"n_cells": grid.n_cells, "domain_length": grid.domain_length}, sort_keys=True)),
        "solver": _hash_text(json.dumps(solver_doc, sort_keys=True)),
        "materials": _hash_text(json.dumps(materials_to_dict(table), sort_keys=True)),
    }
    manifest = Manifest(out_dir / "manifest.json")
    manifest.doc["config_hashes"].update(inputs)

    raw_path = out_dir / "raw_frames.npz"
    if manifest.stage_is_current("solve", inputs):
        print(f"solve: up to date ({raw_path})")
    else:
        meso = parse_mesostructure(meso_path.read_text(encoding="utf-8"))
        result = run_simulation(meso, grid, table, config)
        _save_raw(raw_path, result)
        if result.failed:
            # Keep the partial frames on disk but leave the stage marked
            # unfinished so a rerun retries the solve.
            manifest.doc["stages"]["solve"] = {"status": "failed", "inputs": inputs}
            manifest.save()
            raise SolverFailureError(
                f"simulation ended early ({result.failure_message}); "
                f"partial results saved to {raw_path}"
            )
        manifest.record_stage("solve", inputs, [raw_path])

    post_inputs = dict(inputs, raw=_sha256(raw_path))
    if manifest.stage_is_current("postprocess", post_inputs):
        print(f"postprocess: up to date ({out_dir / 'tensor.bin'})")
    else:
        metadata = {
            "solver_config": solver_doc or {},
            "grid": {"n_cells": grid.n_cells, "domain_length": grid.domain_length},
            "materials": materials_to_dict(table),
            "source": meso_path.name,
        }
        outputs = _postprocess_raw(raw_path, out_dir, metadata)
        manifest.record_stage("postprocess", post_inputs, outputs)
        for path in outputs:
            print(path)
    return 0


def cmd_postprocess(args) -> int:
    raw_path = Path(args.raw)
    if not raw_path.exists():
        raise FileNotFoundError(f"raw frame file not found: {raw_path}")
    out_dir = Path(args.out_dir) if args.out_dir else raw_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir / "manifest.json")
    inputs = {"raw": _sha256(raw_path)}
    outputs = _postprocess_raw(raw_path, out_dir, {"source": raw_path.name})
    manifest.record_stage("postprocess", inputs, outputs)
    for path in outputs:
        print(path)
    return 0


# ---------------------------------------------------------------------------
# ingest-fe
# ---------------------------------------------------------------------------


def cmd_ingest_fe(args) -> int:
    from .postproc import ingest_fe_csv, write_tensor

    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory not found: {in_dir}")
    paths = sorted(in_dir.glob("*.csv"))
    if not paths:
        raise FileNotFoundError(f"no CSV frame files in {in_dir}")
    grid = _grid_from_args(args)
    tensor = ingest_fe_csv(paths, grid, expected_frames=args.expected_frames)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(out_path, tensor, metadata={"source": str(in_dir)})
    print(out_path)
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def cmd_evaluate(args) -> int:
    import numpy as np

    from .errors import ConfigError
    from .metrics import evaluate_damage_maps
    from .postproc import read_tensor

    truth = read_tensor(Path(args.truth_tensor))
    pred = read_tensor(Path(args.pred_tensor))
    if truth.data.shape != pred.data.shape:
        raise ConfigError(
            f"tensor shapes differ: {truth.data.shape} vs {pred.data.shape}"
        )
    if args.frames == "last":
        frame_ids = [truth.n_frames - 1]
    elif args.frames == "all":
        frame_ids = list(range(truth.n_frames))
    else:
        frame_ids = [int(tok) for tok in args.frames.split(",")]
        for k in frame_ids:
            if not 0 <= k < truth.n_frames:
                raise ConfigError(f"frame {k} out of range [0, {truth.n_frames})")

    rows = []
    for k in frame_ids:
        report = evaluate_damage_maps(truth.data[k, 7], pred.data[k, 7])
        rows.append((k, report))

    out_path = Path(args.out) if args.out else None
    lines = ["frame,threshold,precision,recall,f1"]
    for k, rep in rows:
        lines.append(
            f"{k},{rep.threshold!r},{rep.precision!r},{rep.recall!r},{rep.f1!r}"
        )
    csv_text = "\n".join(lines) + "\n"
    if out_path:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        _write_atomic(out_path, csv_text)
        summary = {
            "frames": [k for k, _ in rows],
            "mean_f1": float(np.mean([rep.f1 for _, rep in rows])),
            "min_f1": float(np.min([rep.f1 for _, rep in rows])),
        }
        _write_atomic(
            Path(str(out_path) + ".summary.json"),
            json.dumps(summary, indent=1, sort_keys=True) + "\n",
        )
        print(out_path)
    else:
        sys.stdout.write(csv_text)
    return 0


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------


def cmd_plot(args) -> int:
    from .errors import ConfigError

    if bool(args.tensor) == bool(args.curve):
        raise ConfigError("plot needs exactly one of --tensor or --curve")
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if args.tensor:
        from .postproc import channel_index, read_tensor
        from .raster import write_pgm16

        tensor = read_tensor(Path(args.tensor))
        c = channel_index(args.channel)
        if not 0 <= args.frame < tensor.n_frames:
            raise ConfigError(f"frame {args.frame} out of range [0, {tensor.n_frames})")
        field_map = tensor.data[args.frame, c].astype(float)
        vrange = (0.0, 1.0) if args.channel == "phi" else None
        write_pgm16(out_path, field_map, value_range=vrange)
    else:
        from .postproc import curve_from_csv, curve_to_csv, fracture_energy

        curve = curve_from_csv(Path(args.curve).read_text(encoding="utf-8"))
        text = curve_to_csv(curve)
        text += f"# fracture_energy_MPa,{fracture_energy(curve)!r}\n"
        _write_atomic(out_path, text)
    print(out_path)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mesofrac",
        description="Concrete mesostructure fracture dataset pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate random mesostructures")
    p.add_argument("--seed", type=int, default=None, help="base seed (sample i uses seed+i)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--config", default=None, help="geometry config JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("rasterize", help="phase/material maps as PGM images")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--grid", default=None, help="grid config JSON")
    p.add_argument("--materials", default=None, help="materials JSON")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("simulate", help="run the fracture simulation pipeline")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--grid", default=None)
    p.add_argument("--solver-config", default=None)
    p.add_argument("--materials", default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("postprocess", help="tensor + curve from raw frames")
    p.add_argument("--raw", required=True, help="raw_frames.npz from simulate")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("ingest-fe", help="tensor from scattered FE CSV frames")
    p.add_argument("--in-dir", required=True)
    p.add_argument("--grid", default=None)
    p.add_argument("--expected-frames", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest_fe)

    p = sub.add_parser("evaluate", help="F1 protocol between two tensors")
    p.add_argument("--truth-tensor", required=True)
    p.add_argument("--pred-tensor", required=True)
    p.add_argument("--frames", default="last", help="'all', 'last', or comma list")
    p.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="render a tensor channel (PGM) or curve (CSV)")
    p.add_argument("--tensor", default=None)
    p.add_argument("--curve", default=None)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--channel", default="phi")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    from .errors import (
        ConfigError,
        DegenerateGeometryError,
        InfeasibleOffsetError,
        ParseError,
        PartialPackingError,
        SolverFailureError,
        TensorFormatError,
    )

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ERROR[config]: {exc}", file=sys.stderr)
        return 2
    except (SolverFailureError, PartialPackingError, DegenerateGeometryError, InfeasibleOffsetError) as exc:
        print(f"ERROR[numeric]: {exc}", file=sys.stderr)
        return 3
    except (OSError, ParseError, TensorFormatError) as exc:
        print(f"ERROR[io]: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
