"""Command line interface: batch simulation, synthesis, single blends, metrics.

Batch runs are reproducible end to end: record seeds derive from
sha256(master seed, destination id, record index), manifests are JSON lines
in (destination id, index) order with no timestamps, and all file writes go
through a temp-file-plus-rename so crashes never leave partial outputs.
Per-record failures are logged into the manifest instead of aborting.

Set HAIRFORGE_LOG=DEBUG|INFO|WARNING|ERROR to control verbosity.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DidNotConverge,
    DimensionMismatch,
    HairforgeError,
    MaskTouchesBorder,
    UnsupportedFormat,
)
from .hairsynth import SynthConfig, render_hair
from .imgcore import BinaryMask, RasterImage, load_image, load_mask, save_image, save_mask
from .metrics import bleed_delta, seam_energy
from .placement import load_exemplar_library, sample_placement, transform_exemplar
from .poisson import (
    BlendMode,
    BlendRequest,
    SolverConfig,
    SolverMethod,
    blend,
)

log = logging.getLogger("hairforge")

EXIT_OK = 0
EXIT_DIMENSION_MISMATCH = 1
EXIT_MASK_TOUCHES_BORDER = 2
EXIT_DID_NOT_CONVERGE = 3

SYNTH_MODE_NAME = "synthetic-baseline"


@dataclass
class PipelineConfig:
    destination_dir: Path
    output_dir: Path
    exemplar_dir: Path | None = None
    hairfree_list: Path | None = None
    mode: BlendMode = BlendMode.TWO_STEP
    solver: SolverConfig = dataclasses.field(default_factory=SolverConfig)
    per_image_count: int = 1
    seed: int = 0
    max_attempts: int = 64
    synth: SynthConfig | None = None

    def __post_init__(self):
        if self.per_image_count < 1:
            raise ConfigError("per_image_count must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")


def derive_seed(master_seed: int, destination_id: str, index: int) -> int:
    """Stable per-record seed: sha256 over (master seed, id, index)."""
    digest = hashlib.sha256(
        f"{master_seed}:{destination_id}:{index}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class SimulationManifest:
    """Ordered batch records; serialized as JSON lines."""

    records: list[dict]

    def write(self, path) -> None:
        text = "".join(json.dumps(rec) + "\n" for rec in self.records)
        _atomic_write_text(Path(path), text)

    @classmethod
    def read(cls, path) -> "SimulationManifest":
        lines = Path(path).read_text().splitlines()
        return cls([json.loads(line) for line in lines if line.strip()])


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_save(saver, obj, path: Path) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        saver(obj, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _quantized(image: RasterImage) -> RasterImage:
    """The image as it will reload from disk: 8-bit quantized, halves up."""
    q = np.floor(image.pixels * 255.0 + 0.5) / 255.0
    return RasterImage(q)


def _list_destinations(config: PipelineConfig) -> list[str]:
    root = config.destination_dir
    if not root.is_dir():
        raise ConfigError(f"destination_dir {root} is not a directory")
    ids = sorted(
        p.name[:-4] for p in root.glob("*.png") if not p.name.endswith(".mask.png")
    )
    if config.hairfree_list is not None:
        if not config.hairfree_list.is_file():
            raise ConfigError(f"hairfree_list {config.hairfree_list} is not a file")
        wanted = [
            line.strip()
            for line in config.hairfree_list.read_text().splitlines()
            if line.strip()
        ]
        missing = sorted(set(wanted) - set(ids))
        if missing:
            raise ConfigError(f"hairfree_list names missing destinations: {missing}")
        ids = sorted(set(wanted))
    if not ids:
        raise ConfigError(f"no destination PNGs found under {root}")
    return ids


def _base_record(config: PipelineConfig, destination_id: str, seed: int) -> dict:
    return {
        "output_image": None,
        "output_mask": None,
        "destination_id": destination_id,
        "exemplar_id": None,
        "placement": None,
        "mode": config.mode.value,
        "solver_iterations": None,
        "final_residual": None,
        "seam_energy": None,
        "bleed_delta": None,
        "seed": seed,
        "status": "ok",
    }


def _spec_dict(spec) -> dict:
    return {
        "rotation": spec.rotation,
        "scale": spec.scale,
        "flip_h": spec.flip_h,
        "flip_v": spec.flip_v,
        "offset": list(spec.offset),
        "mask_dilation": spec.mask_dilation,
    }


def _write_outputs(
    config: PipelineConfig,
    record: dict,
    destination_id: str,
    index: int,
    image: RasterImage,
    mask: BinaryMask,
    destination: RasterImage,
) -> None:
    """Quantize, measure, and atomically write one record's image + mask."""
    quant = _quantized(image)
    record["seam_energy"] = seam_energy(quant, mask)
    record["bleed_delta"] = bleed_delta(quant, destination, mask)
    image_name = f"{destination_id}_{index}.png"
    mask_name = f"{destination_id}_{index}.mask.png"
    _atomic_save(save_image, quant, config.output_dir / image_name)
    _atomic_save(save_mask, mask, config.output_dir / mask_name)
    record["output_image"] = image_name
    record["output_mask"] = mask_name


def _simulate_record(
    config: PipelineConfig,
    destination_id: str,
    destination: RasterImage,
    index: int,
    exemplars,
) -> dict:
    seed = derive_seed(config.seed, destination_id, index)
    record = _base_record(config, destination_id, seed)
    rng = np.random.default_rng(seed)
    exemplar = exemplars[int(rng.integers(len(exemplars)))]
    record["exemplar_id"] = exemplar.id
    try:
        spec = sample_placement(exemplar, destination, rng, config.max_attempts)
        placement = transform_exemplar(
            exemplar, spec, (destination.width, destination.height)
        )
        result = blend(
            BlendRequest(
                source=placement.resolved_source,
                destination=destination,
                mask=placement.resolved_mask,
                mode=config.mode,
                solver=config.solver,
            )
        )
    except HairforgeError as exc:
        record["status"] = _status_for(exc)
        if isinstance(exc, DidNotConverge):
            record["final_residual"] = exc.residual
        log.warning("record %s_%d failed: %s", destination_id, index, exc)
        return record
    record["placement"] = _spec_dict(spec)
    record["solver_iterations"] = result.total_iterations
    record["final_residual"] = result.max_residual
    _write_outputs(
        config, record, destination_id, index, result.image,
        placement.resolved_mask, destination,
    )
    return record


def _synth_record(
    config: PipelineConfig,
    destination_id: str,
    destination: RasterImage,
    index: int,
) -> dict:
    seed = derive_seed(config.seed, destination_id, index)
    record = _base_record(config, destination_id, seed)
    record["mode"] = SYNTH_MODE_NAME
    record["exemplar_id"] = "synthetic"
    synth = dataclasses.replace(
        config.synth, seed=seed, canvas=(destination.width, destination.height)
    )
    try:
        image, mask = render_hair(synth, destination)
        _write_outputs(
            config, record, destination_id, index, image, mask, destination
        )
    except HairforgeError as exc:
        record["status"] = _status_for(exc)
        log.warning("record %s_%d failed: %s", destination_id, index, exc)
    return record


def _status_for(exc: HairforgeError) -> str:
    name = type(exc).__name__
    out = [name[0].lower()]
    for ch in name[1:]:
        out.append(f"_{ch.lower()}" if ch.isupper() else ch)
    return "failed:" + "".join(out)


def cmd_simulate(config: PipelineConfig) -> SimulationManifest:
    """Run the exemplar-placement batch; returns the written manifest."""
    if config.exemplar_dir is None or not config.exemplar_dir.is_dir():
        raise ConfigError(f"exemplar_dir {config.exemplar_dir} is not a directory")
    try:
        exemplars = load_exemplar_library(config.exemplar_dir)
    except (HairforgeError, ValueError) as exc:
        raise ConfigError(f"bad exemplar library: {exc}") from exc
    if not exemplars:
        raise ConfigError(f"no exemplar pairs under {config.exemplar_dir}")
    ids = _list_destinations(config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for destination_id in ids:
        destination = load_image(config.destination_dir / f"{destination_id}.png")
        for index in range(config.per_image_count):
            records.append(
                _simulate_record(config, destination_id, destination, index, exemplars)
            )
    manifest = SimulationManifest(records)
    manifest.write(config.output_dir / "manifest.jsonl")
    ok = sum(1 for r in records if r["status"] == "ok")
    log.info("simulate: %d/%d records ok", ok, len(records))
    return manifest


def cmd_synth(config: PipelineConfig) -> SimulationManifest:
    """Run the synthetic-stroke baseline batch; returns the written manifest."""
    if config.synth is None:
        raise ConfigError("synth section (stroke_count at minimum) is required")
    ids = _list_destinations(config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for destination_id in ids:
        destination = load_image(config.destination_dir / f"{destination_id}.png")
        for index in range(config.per_image_count):
            records.append(
                _synth_record(config, destination_id, destination, index)
            )
    manifest = SimulationManifest(records)
    manifest.write(config.output_dir / "manifest.jsonl")
    ok = sum(1 for r in records if r["status"] == "ok")
    log.info("synth: %d/%d records ok", ok, len(records))
    return manifest


def cmd_blend(source, destination, mask, mode, out, solver=None) -> int:
    """Blend one triple of paths; prints diagnostics JSON, returns exit code."""
    try:
        src = load_image(source)
        dst = load_image(destination)
        msk = load_mask(mask)
    except (OSError, UnsupportedFormat) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION_MISMATCH if isinstance(exc, DimensionMismatch) else 1
    try:
        request = BlendRequest(
            source=src,
            destination=dst,
            mask=msk,
            mode=mode,
            solver=solver or SolverConfig(),
        )
        result = blend(request)
    except DimensionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION_MISMATCH
    except MaskTouchesBorder as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MASK_TOUCHES_BORDER
    except DidNotConverge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DID_NOT_CONVERGE
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_save(save_image, result.image, out)
    print(
        json.dumps(
            {
                "mode": mode.value,
                "iterations": result.total_iterations,
                "final_residual": result.max_residual,
            }
        )
    )
    return EXIT_OK


def cmd_metrics(image, destination, mask) -> int:
    """Print seam/bleed metrics for one triple of paths; returns exit code."""
    try:
        img = load_image(image)
        dst = load_image(destination)
        msk = load_mask(mask)
        print(
            json.dumps(
                {
                    "seam_energy": seam_energy(img, msk),
                    "bleed_delta": bleed_delta(img, dst, msk),
                }
            )
        )
    except DimensionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION_MISMATCH
    except (OSError, HairforgeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


# ---------------------------------------------------------------------------
# Config plumbing


def _merge_config(args: argparse.Namespace, need_exemplars: bool) -> PipelineConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")

    def pick(flag_value, key, default=None):
        if flag_value is not None:
            return flag_value
        return data.get(key, default)

    destination_dir = pick(args.destination_dir, "destination_dir")
    output_dir = pick(args.output_dir, "output_dir")
    if destination_dir is None or output_dir is None:
        raise ConfigError("destination_dir and output_dir are required")
    exemplar_dir = pick(args.exemplar_dir, "exemplar_dir")
    if need_exemplars and exemplar_dir is None:
        raise ConfigError("exemplar_dir is required for simulate")
    hairfree_list = pick(args.hairfree_list, "hairfree_list")

    solver_data = dict(data.get("solver", {}))
    if args.solver_method is not None:
        solver_data["method"] = args.solver_method
    if args.tolerance is not None:
        solver_data["tolerance"] = args.tolerance
    if args.max_iterations is not None:
        solver_data["max_iterations"] = args.max_iterations
    try:
        solver = SolverConfig(
            method=SolverMethod(solver_data.get("method", "conjugate_gradient")),
            max_iterations=int(solver_data.get("max_iterations", 10_000)),
            tolerance=float(solver_data.get("tolerance", 1e-4)),
        )
        mode = BlendMode(pick(getattr(args, "mode", None), "mode", "two_step"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    synth = None
    synth_data = dict(data.get("synth", {}))
    for key in ("stroke_count", "blur_sigma"):
        flag = getattr(args, key, None)
        if flag is not None:
            synth_data[key] = flag
    radius_min = getattr(args, "radius_min", None)
    radius_max = getattr(args, "radius_max", None)
    if radius_min is not None or radius_max is not None:
        lo, hi = synth_data.get("radius_range", (0.5, 5.0))
        synth_data["radius_range"] = [
            lo if radius_min is None else radius_min,
            hi if radius_max is None else radius_max,
        ]
    if synth_data:
        if "stroke_count" not in synth_data:
            raise ConfigError("synth.stroke_count is required")
        try:
            synth = SynthConfig(
                stroke_count=int(synth_data["stroke_count"]),
                radius_range=tuple(synth_data.get("radius_range", (0.5, 5.0))),
                blur_sigma=float(synth_data.get("blur_sigma", 1.0)),
                palette=_palette_from(synth_data.get("palette")),
            )
        except ValueError as exc:
            raise ConfigError(f"bad synth section: {exc}") from exc

    try:
        return PipelineConfig(
            destination_dir=Path(destination_dir),
            output_dir=Path(output_dir),
            exemplar_dir=Path(exemplar_dir) if exemplar_dir else None,
            hairfree_list=Path(hairfree_list) if hairfree_list else None,
            mode=mode,
            solver=solver,
            per_image_count=int(pick(args.per_image_count, "per_image_count", 1)),
            seed=int(pick(args.seed, "seed", 0)),
            max_attempts=int(pick(args.max_attempts, "max_attempts", 64)),
            synth=synth,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _palette_from(raw):
    from .hairsynth import DEFAULT_PALETTE

    if raw is None:
        return DEFAULT_PALETTE
    return tuple(tuple(float(v) for v in rgb) for rgb in raw)


def _add_batch_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--destination-dir", dest="destination_dir")
    parser.add_argument("--exemplar-dir", dest="exemplar_dir")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--hairfree-list", dest="hairfree_list",
                        help="newline-delimited destination ids to keep")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--per-image-count", dest="per_image_count", type=int)
    parser.add_argument("--max-attempts", dest="max_attempts", type=int)
    _add_solver_flags(parser)


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--solver-method", dest="solver_method",
        choices=[m.value for m in SolverMethod],
    )
    parser.add_argument("--tolerance", type=float)
    parser.add_argument("--max-iterations", dest="max_iterations", type=int)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hairforge",
        description="Simulate hair on dermoscopic images with exact ground-truth masks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="batch-blend hair exemplars onto destinations")
    _add_batch_flags(p_sim)
    p_sim.add_argument("--mode", choices=[m.value for m in BlendMode])

    p_syn = sub.add_parser("synth", help="batch-render synthetic stroke hair")
    _add_batch_flags(p_syn)
    p_syn.add_argument("--stroke-count", dest="stroke_count", type=int)
    p_syn.add_argument("--radius-min", dest="radius_min", type=float)
    p_syn.add_argument("--radius-max", dest="radius_max", type=float)
    p_syn.add_argument("--blur-sigma", dest="blur_sigma", type=float)

    p_blend = sub.add_parser("blend", help="blend one source/destination/mask triple")
    p_blend.add_argument("source")
    p_blend.add_argument("destination")
    p_blend.add_argument("mask")
    p_blend.add_argument("--out", required=True)
    p_blend.add_argument(
        "--mode", choices=[m.value for m in BlendMode], default="two_step"
    )
    _add_solver_flags(p_blend)

    p_metrics = sub.add_parser("metrics", help="seam/bleed metrics for one triple")
    p_metrics.add_argument("image")
    p_metrics.add_argument("destination")
    p_metrics.add_argument("mask")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("HAIRFORGE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cmd_simulate(_merge_config(args, need_exemplars=True))
            return EXIT_OK
        if args.command == "synth":
            cmd_synth(_merge_config(args, need_exemplars=False))
            return EXIT_OK
        if args.command == "blend":
            solver = SolverConfig(
                method=SolverMethod(args.solver_method or "conjugate_gradient"),
                max_iterations=args.max_iterations or 10_000,
                tolerance=args.tolerance if args.tolerance is not None else 1e-4,
            )
            return cmd_blend(
                args.source,
                args.destination,
                args.mask,
                BlendMode(args.mode),
                args.out,
                solver,
            )
        if args.command == "metrics":
            return cmd_metrics(args.image, args.destination, args.mask)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError(f"unhandled command {args.command!r}")


def entrypoint() -> None:
    sys.exit(main())
