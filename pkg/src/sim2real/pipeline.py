"""Dataset pipeline commands and the three-condition experiment.

Every command takes a RunConfig (one resolved tree for the whole run) and
derives its stage seeds from the master seed, so a fixed seed reproduces
every image, manifest, weight file, and report byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import imagecodec, manifest as mf, metrics, nn
from .autodiff import Tensor
from .cyclegan import (CycleGanConfig, Generator, build_nets, convert_image, smoothed,
                       train_cyclegan)
from .errors import ConfigError, ValidationError
from .labeler import SafetyConfig, VelocityDistribution, augment_velocity, label_grid
from .labeler_oracle import oracle_label_grid
from .manifest import ManifestRecord, labels_to_str, read_manifest, write_manifest
from .primitives import PrimitiveGrid, VehicleState
from .rollout import RolloutConfig, RolloutResult, net_policy, oracle_policy, rollout
from .scene import (CameraIntrinsics, SceneSpec, StyleTransform, apply_style,
                    generate_scene, render, sample_poses)
from .tasknets import (AvoidanceNet, AvoidanceNetConfig, SegNet, SegNetConfig,
                       TaskDataset, TrainSpec, predict_collision, predict_segmentation,
                       train_task_net)

CONDITIONS = ("converted", "simulated", "real")


def derive_seed(master: int, *tags) -> int:
    blob = repr((int(master),) + tuple(tags)).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1


# -- configuration tree -------------------------------------------------------


@dataclass(frozen=True)
class GanTrainConfig:
    iterations: int = 2000
    batch_size: int = 1
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    cycle_weight: float = 4.0
    base_channels: int = 12
    res_blocks: int = 2
    disc_channels: tuple = (8, 16)
    head_init_std: float = 1.5
    optimizer: str = "adam"
    d_steps: int = 1
    g_steps: int = 1

    def build(self, image_size, seed: int) -> CycleGanConfig:
        return CycleGanConfig(
            image_size=tuple(image_size), cycle_weight=self.cycle_weight,
            iterations=self.iterations, batch_size=self.batch_size, lr=self.lr,
            beta1=self.beta1, beta2=self.beta2, optimizer=self.optimizer,
            base_channels=self.base_channels, res_blocks=self.res_blocks,
            disc_channels=tuple(self.disc_channels), head_init_std=self.head_init_std,
            d_steps=self.d_steps, g_steps=self.g_steps, seed=seed,
        )


@dataclass(frozen=True)
class GridConfig:
    n_lat: int = 11
    n_fwd: int = 11
    max_accel: float = 2.0
    horizon: float = 1.5
    dt: float = 0.05
    tau: float = 0.3

    def build(self) -> PrimitiveGrid:
        return PrimitiveGrid(self.n_lat, self.n_fwd, self.max_accel,
                             self.horizon, self.dt, self.tau)


@dataclass(frozen=True)
class StyleOptions:
    gradient_strength: float = 0.08
    noise_sigma: float = 0.01

    def build(self, seed: int) -> StyleTransform:
        return StyleTransform(gradient_strength=self.gradient_strength,
                              noise_sigma=self.noise_sigma, seed=seed)


@dataclass(frozen=True)
class GenerateConfig:
    n_scenes: int = 3
    n_sim: int = 510
    n_pseudo: int = 510
    n_paired: int = 60
    n_test: int = 144
    pose_clearance: float = 0.45


@dataclass(frozen=True)
class TaskConfig:
    batch_size: int = 10
    iterations_avoidance: int = 800
    iterations_segmentation: int = 600
    lr: float = 2.5e-4
    weight_decay: float = 1e-4
    conv_channels: tuple = (16, 32)
    hidden_width: int = 128
    n_hidden: int = 4
    seg_base_channels: int = 8


@dataclass(frozen=True)
class PolicyConfig:
    """Oracle-policy safety envelope for closed-loop rollouts."""

    fov_fx: float = 32.0          # at 64x48: 90 degree horizontal FOV
    image_width: int = 64
    image_height: int = 48
    horizon: float = 2.5          # lookahead beyond the dataset-label horizon
    check_dt: float = 0.0125
    sigma_pos: float = 0.35
    speed_scaled_sigma: bool = True

    def intrinsics(self, max_depth: float = 10.0) -> CameraIntrinsics:
        return CameraIntrinsics(self.image_width, self.image_height, self.fov_fx,
                                self.fov_fx, (self.image_width - 1) / 2.0,
                                (self.image_height - 1) / 2.0, max_depth)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    image_size: tuple = (32, 32)   # (height, width) for dataset generation and nets
    threads: int = 1
    scene: SceneSpec = field(default_factory=SceneSpec)
    style: StyleOptions = field(default_factory=StyleOptions)
    generate: GenerateConfig = field(default_factory=GenerateConfig)
    gan: GanTrainConfig = field(default_factory=GanTrainConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    velocity: VelocityDistribution = field(default_factory=VelocityDistribution)
    augment_factor: int = 2
    task: TaskConfig = field(default_factory=TaskConfig)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("threads")  # execution knob; does not shape the data
        return mf.config_hash(d)

    def intrinsics(self) -> CameraIntrinsics:
        h, w = self.image_size
        return CameraIntrinsics.for_size(w, h)

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        d = dict(d)
        built = {}
        for key, cls, tuple_fields in (
            ("scene", SceneSpec, ()),
            ("style", StyleOptions, ()),
            ("generate", GenerateConfig, ()),
            ("gan", GanTrainConfig, ("disc_channels",)),
            ("grid", GridConfig, ()),
            ("safety", SafetyConfig, ()),
            ("velocity", VelocityDistribution, ("forward", "lateral")),
            ("task", TaskConfig, ("conv_channels",)),
            ("rollout", RolloutConfig, ()),
            ("policy", PolicyConfig, ()),
        ):
            if key in d:
                sub = dict(d.pop(key))
                for tf in tuple_fields:
                    if tf in sub:
                        sub[tf] = tuple(sub[tf])
                built[key] = cls(**sub)
        if "image_size" in d:
            d["image_size"] = tuple(d["image_size"])
        return RunConfig(**d, **built)

    @staticmethod
    def from_json_file(path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return RunConfig.from_dict(json.load(fh))


def _map_records(fn, items, threads: int):
    """Order-preserving map, optionally fanned out over a thread pool."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# -- generate ------------------------------------------------------------------


def _scene_pool(cfg: RunConfig):
    return [
        generate_scene(cfg.scene, derive_seed(cfg.seed, "scene", i))
        for i in range(cfg.generate.n_scenes)
    ]


def _draw_state(rng, velocity: VelocityDistribution) -> VehicleState:
    return VehicleState(velocity.draw(rng), np.zeros(3))


def cmd_generate(cfg: RunConfig, out_dir) -> dict:
    """Render corpora: unpaired sim + pseudo-real (disjoint poses), a paired
    eval split, and a held-out pseudo-real test split. Returns manifest paths."""
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    scenes = _scene_pool(cfg)
    intr = cfg.intrinsics()
    gen = cfg.generate
    chash = cfg.config_hash
    paths = {}

    def spread(n):
        counts = [n // len(scenes)] * len(scenes)
        for i in range(n % len(scenes)):
            counts[i] += 1
        return counts

    def emit(split: str, n: int, styled: bool, paired: bool):
        records = []
        state_rng = np.random.default_rng(derive_seed(cfg.seed, "states", split))
        counts = spread(n)
        idx = 0
        jobs = []
        for si, (scene, count) in enumerate(zip(scenes, counts)):
            poses = sample_poses(scene, count, derive_seed(cfg.seed, "poses", split, si),
                                 clearance=gen.pose_clearance)
            for pose in poses:
                jobs.append((si, scene, pose, idx))
                idx += 1

        def render_one(job):
            si, scene, pose, i = job
            return render(scene, pose, intr)

        outs = _map_records(render_one, jobs, cfg.threads)
        for (si, scene, pose, i), out in zip(jobs, outs):
            stem = f"{split}_{i:06d}"
            state = _draw_state(state_rng, cfg.velocity)
            style = cfg.style.build(derive_seed(cfg.seed, "style", split, i))
            rec = ManifestRecord(
                rgb=f"images/{stem}.ppm",
                domain="pseudo-real" if styled else "sim",
                depth=f"images/{stem}_depth.pgm",
                seg=f"images/{stem}_seg.pgm",
                pose={"position": [float(x) for x in pose.position], "yaw": pose.yaw},
                state=mf.state_dict(state),
                provenance={"seed": cfg.seed, "config_hash": chash, "scene": si},
            )
            rgb = out.rgb
            if styled:
                rgb = apply_style(out.rgb, style, out.seg)
            imagecodec.save_rgb(os.path.join(out_dir, rec.rgb), rgb)
            imagecodec.save_depth(os.path.join(out_dir, rec.depth), out.depth)
            imagecodec.save_seg(os.path.join(out_dir, rec.seg), out.seg)
            if paired:
                twin = apply_style(out.rgb, style, out.seg)
                rec = replace(rec, pair_rgb=f"images/{stem}_twin.ppm")
                imagecodec.save_rgb(os.path.join(out_dir, rec.pair_rgb), twin)
            records.append(rec)
        path = os.path.join(out_dir, f"{split}.jsonl")
        write_manifest(path, records)
        return path

    paths["sim"] = emit("sim", gen.n_sim, styled=False, paired=False)
    paths["pseudo"] = emit("pseudo", gen.n_pseudo, styled=True, paired=False)
    paths["paired_eval"] = emit("paired", gen.n_paired, styled=False, paired=True)
    paths["test"] = emit("test", gen.n_test, styled=True, paired=False)
    return paths


# -- label ----------------------------------------------------------------------


def cmd_label(cfg: RunConfig, manifest_path, out_path, redraw: bool = True) -> str:
    """Attach collision label vectors; with redraw, emit augment_factor
    velocity variants per record (images shared by reference)."""
    records = read_manifest(manifest_path)
    intr = cfg.intrinsics()
    grid = cfg.grid.build()
    factor = cfg.augment_factor if redraw else 1

    def label_one(item):
        i, rec = item
        if rec.depth is None or rec.state is None:
            raise ValidationError(f"record {i} lacks depth or state; cannot label")
        depth = imagecodec.load_depth(mf.resolve(manifest_path, rec.depth))
        state = rec.vehicle_state()
        rec = mf.rebase_record(rec, manifest_path, out_path)
        if redraw:
            variants = augment_velocity(
                state, depth, intr, grid, cfg.safety, factor, cfg.velocity,
                seed=derive_seed(cfg.seed, "augment", os.path.basename(str(manifest_path)), i),
            )
        else:
            variants = [(state, label_grid(state, depth, intr, grid, cfg.safety))]
        out = []
        for k, (vstate, labels) in enumerate(variants):
            prov = dict(rec.provenance)
            prov["augment"] = k
            prov["augment_factor"] = factor
            out.append(replace(rec, state=mf.state_dict(vstate),
                               labels=labels_to_str(labels), provenance=prov))
        return out

    results = _map_records(label_one, list(enumerate(records)), cfg.threads)
    labeled = [rec for group in results for rec in group]
    write_manifest(out_path, labeled)
    return out_path


def cmd_audit_labels(cfg: RunConfig, labeled_manifest, n_sample: int = 50,
                     seed: int | None = None) -> dict:
    """Re-derive a sample of labels with the brute-force oracle; report
    mismatches outside the floating-point boundary band."""
    records = read_manifest(labeled_manifest)
    if not records:
        raise ValidationError("labeled manifest is empty")
    rng = np.random.default_rng(derive_seed(cfg.seed, "audit") if seed is None else seed)
    pick = rng.choice(len(records), size=min(n_sample, len(records)), replace=False)
    intr = cfg.intrinsics()
    grid = cfg.grid.build()
    mismatches = 0
    compared = 0
    for i in sorted(pick):
        rec = records[i]
        depth = imagecodec.load_depth(mf.resolve(labeled_manifest, rec.depth))
        want = rec.label_vector()
        got, slack = oracle_label_grid(rec.vehicle_state(), depth, intr, grid, cfg.safety)
        usable = slack > 1e-6
        compared += int(usable.sum())
        mismatches += int((got[usable] != want[usable]).sum())
    return {"records_checked": len(pick), "labels_compared": compared,
            "mismatches": mismatches}


# -- GAN stages -------------------------------------------------------------------


def _load_rgb_array(manifest_path, records) -> np.ndarray:
    imgs = [
        imagecodec.load_rgb(mf.resolve(manifest_path, r.rgb)).transpose(2, 0, 1)
        for r in records
    ]
    return np.stack(imgs)


def cmd_train_gan(cfg: RunConfig, sim_manifest, pseudo_manifest, out_dir) -> dict:
    """Train the translation nets on the two unpaired corpora; saves weights
    and loss history, returns {weights, history, nets, state}."""
    os.makedirs(out_dir, exist_ok=True)
    sim_records = read_manifest(sim_manifest)
    pseudo_records = read_manifest(pseudo_manifest)
    data_a = _load_rgb_array(sim_manifest, sim_records)
    data_b = _load_rgb_array(pseudo_manifest, pseudo_records)
    gan_cfg = cfg.gan.build(cfg.image_size, derive_seed(cfg.seed, "gan"))
    nets, state = train_cyclegan(data_a, data_b, gan_cfg)
    weights = os.path.join(out_dir, "cyclegan.gsrt")
    nn.save_weights(weights, nets.all_params())
    history = os.path.join(out_dir, "history.json")
    with open(history, "w", encoding="utf-8") as fh:
        json.dump(state.history, fh, sort_keys=True)
    return {"weights": weights, "history": history, "nets": nets, "state": state}


def load_generator(cfg: RunConfig, weights_path, direction: str = "ab") -> Generator:
    gan_cfg = cfg.gan.build(cfg.image_size, 0)
    nets = build_nets(gan_cfg)
    weights = nn.load_weights(weights_path)
    gen = nets.g_ab if direction == "ab" else nets.g_ba
    own = {p.name: p for p in gen.parameters()}
    for name, param in own.items():
        if name not in weights:
            raise ValidationError(f"weight file lacks parameter {name}")
        if param.data.shape != weights[name].shape:
            raise ValidationError(f"{name}: weight shape mismatch")
        param.tensor.data = weights[name].copy()
    return gen


def cmd_convert(cfg: RunConfig, weights_path, manifest_path, out_manifest) -> str:
    """Map every sim record through the learned generator; labels, masks,
    states and depth references are carried over verbatim."""
    records = read_manifest(manifest_path)
    for rec in records:
        if rec.domain != "sim":
            raise ValidationError("cmd_convert expects a sim-domain manifest")
    gen = load_generator(cfg, weights_path, "ab")
    out_dir = os.path.dirname(os.path.abspath(out_manifest))
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    h, w = cfg.image_size

    converted_paths = {}

    def convert_one(rec):
        if rec.rgb not in converted_paths:
            rgb = imagecodec.load_rgb(mf.resolve(manifest_path, rec.rgb))
            if rgb.shape[:2] != (h, w):
                raise ValidationError(
                    f"{rec.rgb}: image {rgb.shape[:2]} does not match generator {(h, w)}"
                )
            out = convert_image(gen, rgb)
            stem = os.path.splitext(os.path.basename(rec.rgb))[0]
            rel = f"images/{stem}_conv.ppm"
            imagecodec.save_rgb(os.path.join(out_dir, rel), out)
            converted_paths[rec.rgb] = rel
        prov = dict(rec.provenance)
        prov["converted_from"] = rec.rgb
        moved = mf.rebase_record(rec, manifest_path, out_manifest)
        return replace(moved, rgb=converted_paths[rec.rgb], domain="converted",
                       provenance=prov)

    out_records = [convert_one(r) for r in records]
    write_manifest(out_manifest, out_records)
    return out_manifest


# -- task training / evaluation -----------------------------------------------------


def load_task_dataset(manifest_path, kind: str) -> TaskDataset:
    records = read_manifest(manifest_path)
    if not records:
        raise ValidationError(f"{manifest_path}: empty manifest")
    if kind == "segmentation":
        seen = set()
        keep = []
        for rec in records:  # velocity variants share images; dedupe for seg
            if rec.rgb not in seen:
                seen.add(rec.rgb)
                keep.append(rec)
        records = keep
    images = _load_rgb_array(manifest_path, records)
    if kind == "avoidance":
        states = np.stack([
            np.concatenate([r.vehicle_state().v0, r.vehicle_state().a0]) for r in records
        ])
        labels = np.stack([r.label_vector() for r in records]).astype(np.float64)
        return TaskDataset(images, states=states, labels=labels)
    masks = np.stack([
        imagecodec.load_seg(mf.resolve(manifest_path, r.seg)) for r in records
    ]).astype(np.int64)
    return TaskDataset(images, masks=masks)


def cmd_train_task(cfg: RunConfig, kind: str, manifest_path, out_weights,
                   seed_tag: str = "") -> dict:
    dataset = load_task_dataset(manifest_path, kind)
    iters = (cfg.task.iterations_avoidance if kind == "avoidance"
             else cfg.task.iterations_segmentation)
    spec = TrainSpec(kind=kind, batch_size=cfg.task.batch_size, iterations=iters,
                     lr=cfg.task.lr, weight_decay=cfg.task.weight_decay,
                     seed=derive_seed(cfg.seed, "task", kind, seed_tag))
    net = _build_task_net(cfg, kind, spec.seed)
    net, history = train_task_net(kind, dataset, spec, net=net)
    nn.save_weights(out_weights, net.parameters())
    return {"weights": out_weights, "history": history, "net": net}


def _build_task_net(cfg: RunConfig, kind: str, seed: int):
    if kind == "avoidance":
        return AvoidanceNet(AvoidanceNetConfig(
            input_hw=tuple(cfg.image_size), conv_channels=tuple(cfg.task.conv_channels),
            hidden_width=cfg.task.hidden_width, n_hidden=cfg.task.n_hidden, seed=seed))
    from .scene import WAREHOUSE_CLASSES
    return SegNet(SegNetConfig(input_hw=tuple(cfg.image_size),
                               base_channels=cfg.task.seg_base_channels,
                               n_classes=WAREHOUSE_CLASSES.n_classes, seed=seed))


def load_task_net(cfg: RunConfig, kind: str, weights_path):
    net = _build_task_net(cfg, kind, 0)
    nn.assign_weights(net, nn.load_weights(weights_path))
    return net


def eval_avoidance(cfg: RunConfig, nets_by_condition: dict, test_manifest) -> list[dict]:
    records = read_manifest(test_manifest)
    rows = []
    for condition, net in nets_by_condition.items():
        scores, labels = [], []
        for rec in records:
            rgb = imagecodec.load_rgb(mf.resolve(test_manifest, rec.rgb))
            probs = predict_collision(net, rgb, rec.vehicle_state())
            scores.append(probs)
            labels.append(rec.label_vector())
        scored = metrics.ScoredLabels(np.concatenate(scores), np.concatenate(labels))
        rows.append({
            "condition": condition,
            "auroc": metrics.auroc(scored),
            "log_loss": metrics.log_loss(scored),
            "n_scored": int(scored.scores.size),
        })
    return rows


def eval_segmentation(cfg: RunConfig, nets_by_condition: dict, test_manifest) -> list[dict]:
    from .scene import WAREHOUSE_CLASSES
    records = read_manifest(test_manifest)
    rows = []
    for condition, net in nets_by_condition.items():
        cm = metrics.ConfusionMatrix(
            np.zeros((WAREHOUSE_CLASSES.n_classes, WAREHOUSE_CLASSES.n_classes), np.int64))
        for rec in records:
            rgb = imagecodec.load_rgb(mf.resolve(test_manifest, rec.rgb))
            pred = predict_segmentation(net, rgb)
            truth = imagecodec.load_seg(mf.resolve(test_manifest, rec.seg))
            cm = cm + metrics.ConfusionMatrix.from_masks(truth, pred,
                                                         WAREHOUSE_CLASSES.n_classes)
        result = metrics.miou(cm)
        rows.append({
            "condition": condition,
            "miou_global": result.global_average,
            "miou_class_avg": result.class_average,
            "per_class": {str(k): round(v, 2) for k, v in result.per_class.items()},
        })
    return rows


def eval_report(rows: list[dict]) -> tuple[str, str]:
    """Aligned text plus line-delimited JSON for a metric row list."""
    flat = [{k: v for k, v in row.items() if not isinstance(v, dict)} for row in rows]
    return metrics.report_rows_to_text(flat), metrics.report_rows_to_jsonl(rows)


# -- rollout ------------------------------------------------------------------------


def cmd_rollout(cfg: RunConfig, scene_seed: int, policy_kind: str = "oracle",
                weights_path=None, log_path=None) -> RolloutResult:
    scene = generate_scene(cfg.scene, scene_seed)
    grid = PrimitiveGrid(cfg.grid.n_lat, cfg.grid.n_fwd, cfg.grid.max_accel,
                         cfg.policy.horizon, cfg.grid.dt, cfg.grid.tau)
    safety = replace(cfg.safety, sigma_pos=cfg.policy.sigma_pos,
                     check_dt=cfg.policy.check_dt)
    intr = cfg.policy.intrinsics()
    if policy_kind == "oracle":
        policy = oracle_policy(intr, grid, safety,
                               speed_scaled_sigma=cfg.policy.speed_scaled_sigma,
                               speed_cap=cfg.rollout.speed_cap)
    elif policy_kind == "net":
        if weights_path is None:
            raise ConfigError("net policy requires a weights path")
        net = load_task_net(cfg, "avoidance", weights_path)
        policy = net_policy(net)
    else:
        raise ConfigError(f"unknown policy kind {policy_kind!r}")
    result = rollout(scene, policy, grid, safety, intr, cfg.rollout)
    if log_path:
        with open(log_path, "w", encoding="utf-8") as fh:
            for step in result.steps:
                fh.write(json.dumps(step, sort_keys=True) + "\n")
            fh.write(json.dumps({"status": result.status,
                                 "distance": result.distance_travelled},
                                sort_keys=True) + "\n")
    return result


# -- prediction-grid figure ------------------------------------------------------------


def render_prediction_grid(probs, labels=None, cell: int = 16) -> np.ndarray:
    """11x11 heatmap, white = safe to charcoal = unsafe, black 0.5 contour;
    optional ground-truth panel on the right. Lateral axis left-to-right,
    forward axis bottom-to-top."""
    probs = np.asarray(probs, dtype=np.float64)
    side = int(round(np.sqrt(probs.size)))
    if side * side != probs.size:
        raise ValidationError(f"prediction grid needs a square count, got {probs.size}")
    if probs.min() < 0 or probs.max() > 1:
        raise ValidationError("probabilities must lie in [0,1]")
    panels = [_grid_panel(probs.reshape(side, side), cell)]
    if labels is not None:
        labels = np.asarray(labels, dtype=np.float64)
        panels.append(np.ones((side * cell, cell, 3)))  # white gap
        panels.append(_grid_panel(labels.reshape(side, side), cell))
    return np.concatenate(panels, axis=1)


_WHITE, _CHARCOAL = 0.95, 0.22


def _grid_panel(values: np.ndarray, cell: int) -> np.ndarray:
    side = values.shape[0]
    img_cells = np.empty((side, side))
    for i in range(side):       # lateral index -> column
        for j in range(side):   # forward index -> row from the bottom
            img_cells[side - 1 - j, i] = values[i, j]
    gray = _WHITE + img_cells * (_CHARCOAL - _WHITE)
    img = np.repeat(np.repeat(gray, cell, axis=0), cell, axis=1)[..., None].repeat(3, axis=2)
    above = img_cells >= 0.5
    for r in range(side):
        for c in range(side):
            if c + 1 < side and above[r, c] != above[r, c + 1]:
                img[r * cell:(r + 1) * cell, (c + 1) * cell - 1:(c + 1) * cell + 1] = 0.0
            if r + 1 < side and above[r, c] != above[r + 1, c]:
                img[(r + 1) * cell - 1:(r + 1) * cell + 1, c * cell:(c + 1) * cell] = 0.0
    return img


def cmd_plot_grid(probs, labels=None, out_path="grid.ppm", cell: int = 16) -> str:
    imagecodec.save_rgb(out_path, render_prediction_grid(probs, labels, cell))
    return out_path


# -- the three-condition experiment ------------------------------------------------------


def cmd_experiment(cfg: RunConfig, out_dir) -> dict:
    """Full pipeline under three training-data conditions (converted, raw sim,
    pseudo-real proxy), evaluated on a held-out pseudo-real test set."""
    os.makedirs(out_dir, exist_ok=True)
    data_dir = os.path.join(out_dir, "data")
    os.makedirs(data_dir, exist_ok=True)

    paths = cmd_generate(cfg, data_dir)
    labeled = {
        "sim": cmd_label(cfg, paths["sim"], os.path.join(data_dir, "labeled_sim.jsonl")),
        "pseudo": cmd_label(cfg, paths["pseudo"],
                            os.path.join(data_dir, "labeled_pseudo.jsonl")),
        "test": cmd_label(cfg, paths["test"], os.path.join(data_dir, "labeled_test.jsonl"),
                          redraw=False),
    }

    gan = cmd_train_gan(cfg, paths["sim"], paths["pseudo"], os.path.join(out_dir, "gan"))
    gan_report = _gan_eval(cfg, gan, paths["paired_eval"])

    labeled["converted"] = cmd_convert(cfg, gan["weights"], labeled["sim"],
                                       os.path.join(data_dir, "labeled_converted.jsonl"))

    condition_manifests = {
        "converted": labeled["converted"],
        "simulated": labeled["sim"],
        "real": labeled["pseudo"],
    }
    task_dir = os.path.join(out_dir, "tasks")
    os.makedirs(task_dir, exist_ok=True)
    avoidance_nets, seg_nets = {}, {}
    for condition, man in condition_manifests.items():
        avoid = cmd_train_task(cfg, "avoidance", man,
                               os.path.join(task_dir, f"avoidance_{condition}.gsrt"),
                               seed_tag=condition)
        seg = cmd_train_task(cfg, "segmentation", man,
                             os.path.join(task_dir, f"seg_{condition}.gsrt"),
                             seed_tag=condition)
        avoidance_nets[condition] = avoid["net"]
        seg_nets[condition] = seg["net"]

    avoidance_rows = eval_avoidance(cfg, avoidance_nets, labeled["test"])
    seg_rows = eval_segmentation(cfg, seg_nets, labeled["test"])

    by_cond = {r["condition"]: r for r in avoidance_rows}
    seg_by_cond = {r["condition"]: r for r in seg_rows}
    criteria = {
        "gan_l1_ratio": gan_report["l1_ratio"] <= 0.7,
        "gan_cycle_decreased": gan_report["cycle_final"] < gan_report["cycle_at_10"],
        "avoidance_ordering": (
            by_cond["converted"]["auroc"] > by_cond["simulated"]["auroc"]
            and by_cond["converted"]["log_loss"] < by_cond["simulated"]["log_loss"]
        ),
        "real_proxy_bound": (
            by_cond["real"]["auroc"] >= by_cond["converted"]["auroc"] - 0.05
        ),
        "segmentation_ordering": (
            seg_by_cond["converted"]["miou_global"]
            >= 1.2 * seg_by_cond["simulated"]["miou_global"]
        ),
    }
    report = {
        "seed": cfg.seed,
        "config_hash": cfg.config_hash,
        "gan": gan_report,
        "avoidance": avoidance_rows,
        "segmentation": seg_rows,
        "criteria": criteria,
        "all_pass": all(criteria.values()),
    }
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    text_a, jsonl_a = eval_report(avoidance_rows)
    text_s, jsonl_s = eval_report(seg_rows)
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("collision prediction on pseudo-real test set\n")
        fh.write(text_a + "\n")
        fh.write("segmentation on pseudo-real test set [mIoU x100]\n")
        fh.write(text_s + "\n")
        fh.write(f"gan paired-eval L1 ratio: {gan_report['l1_ratio']:.4f}\n")
        for name, ok in criteria.items():
            fh.write(f"{name}: {'pass' if ok else 'FAIL'}\n")
    with open(os.path.join(out_dir, "report.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(jsonl_a + jsonl_s)

    # one example prediction figure per condition, first test record
    test_records = read_manifest(labeled["test"])
    if test_records:
        rec = test_records[0]
        rgb = imagecodec.load_rgb(mf.resolve(labeled["test"], rec.rgb))
        for condition, net in avoidance_nets.items():
            probs = predict_collision(net, rgb, rec.vehicle_state())
            cmd_plot_grid(probs, rec.label_vector(),
                          os.path.join(out_dir, f"grid_{condition}.ppm"))
    return report


def _gan_eval(cfg: RunConfig, gan: dict, paired_manifest) -> dict:
    records = read_manifest(paired_manifest)
    sims = _load_rgb_array(paired_manifest, records)
    twins = np.stack([
        imagecodec.load_rgb(mf.resolve(paired_manifest, r.pair_rgb)).transpose(2, 0, 1)
        for r in records
    ])
    base_l1 = float(np.abs(sims - twins).mean())
    converted = gan["nets"].g_ab(Tensor(sims, validate=False)).data
    conv_l1 = float(np.abs(converted - twins).mean())
    cyc = smoothed(gan["state"].history["cycle"])
    return {
        "paired_l1_baseline": base_l1,
        "paired_l1_converted": conv_l1,
        "l1_ratio": conv_l1 / base_l1 if base_l1 > 0 else np.inf,
        "cycle_at_10": float(cyc[10]) if cyc.size > 10 else float("nan"),
        "cycle_final": float(cyc[-1]) if cyc.size else float("nan"),
        "iterations": len(gan["state"].history["cycle"]),
    }
