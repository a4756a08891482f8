"""Synthetic scenes and parametric detector models.

Two simulated detectors with complementary per-class sensitivity stand in for
the RGB-trained and the thermal-trained networks, so the effect of ensembling
can be measured end to end without any imagery.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence([seed,
image_index, stream])``; each image and each detector has its own substream,
which makes per-image work order-independent.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from msfuse import jsonio
from msfuse.detections import (
    CANONICAL_CLASSES,
    DEFAULT_REGISTRY,
    Detection,
    DetectionSet,
    GroundTruth,
    GroundTruthSet,
    save_detections,
    save_ground_truth,
)
from msfuse.ensemble import FusionConfig, ensemble_fuse
from msfuse.geometry import BoundingBox
from msfuse.metrics import EvalConfig, evaluate

GT_STREAM = 0
BASELINE_STREAM = 1
THERMAL_STREAM = 2


class SynthConfigError(ValueError):
    pass


def _check_prob(name, v):
    if not 0.0 <= v <= 1.0:
        raise SynthConfigError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class DetectorProfile:
    miss_rate: dict[str, float]
    fp_per_image: float = 0.0
    jitter_sigma: float = 0.0
    tp_conf: tuple[float, float] = (1.0, 0.0)
    fp_conf: tuple[float, float] = (0.3, 0.1)

    def __post_init__(self):
        object.__setattr__(self, "tp_conf", tuple(self.tp_conf))
        object.__setattr__(self, "fp_conf", tuple(self.fp_conf))
        for k, v in self.miss_rate.items():
            _check_prob(f"miss_rate[{k}]", v)
        if self.fp_per_image < 0 or self.jitter_sigma < 0:
            raise SynthConfigError("fp_per_image and jitter_sigma must be non-negative")
        for name, (mu, sd) in (("tp_conf", self.tp_conf), ("fp_conf", self.fp_conf)):
            _check_prob(f"{name} mean", mu)
            if sd < 0:
                raise SynthConfigError(f"{name} std must be non-negative")

    def miss(self, cls_key: str) -> float:
        return self.miss_rate.get(cls_key, 0.0)


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    baseline_profile: DetectorProfile
    thermal_profile: DetectorProfile
    n_images: int = 200
    image_w: int = 640
    image_h: int = 512
    objects_per_image: dict[str, tuple[int, int]] = field(
        default_factory=lambda: {c.key: (0, 2) for c in CANONICAL_CLASSES}
    )
    box_size: tuple[float, float] = (24, 96)

    def __post_init__(self):
        object.__setattr__(self, "box_size", tuple(self.box_size))
        object.__setattr__(
            self, "objects_per_image", {k: tuple(v) for k, v in self.objects_per_image.items()}
        )
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise SynthConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.n_images < 1:
            raise SynthConfigError("n_images must be at least 1")
        if self.image_w <= 0 or self.image_h <= 0:
            raise SynthConfigError("image size must be positive")
        lo, hi = self.box_size
        if not (0 < lo <= hi) or hi > min(self.image_w, self.image_h):
            raise SynthConfigError(
                f"box size range {self.box_size} infeasible for a {self.image_w}x{self.image_h} image"
            )
        for k, (a, b) in self.objects_per_image.items():
            if k not in DEFAULT_REGISTRY:
                raise SynthConfigError(f"unknown class {k!r}")
            if not 0 <= a <= b:
                raise SynthConfigError(f"objects_per_image[{k}] = {(a, b)} is not a valid range")

    @property
    def class_keys(self) -> list[str]:
        return sorted(self.objects_per_image)

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d))

    @classmethod
    def from_dict(cls, d) -> SynthConfig:
        d = dict(d)
        try:
            d["baseline_profile"] = DetectorProfile(**d["baseline_profile"])
            d["thermal_profile"] = DetectorProfile(**d["thermal_profile"])
            return cls(**d)
        except (KeyError, TypeError) as e:
            raise SynthConfigError(f"bad synth config: {e}") from None

    @classmethod
    def load(cls, path) -> SynthConfig:
        return cls.from_dict(jsonio.read_json(path))


def complementary_profiles() -> tuple[DetectorProfile, DetectorProfile]:
    """Baseline strong on cracks/corrosion, thermal strong on overheating.

    Values are synthetic, tuned only so that the two detectors' errors are
    complementary.
    """
    baseline = DetectorProfile(
        miss_rate={"C1": 0.1, "C2": 0.1, "C3": 0.6},
        fp_per_image=0.3,
        jitter_sigma=1.5,
        tp_conf=(0.8, 0.1),
        fp_conf=(0.3, 0.1),
    )
    thermal = DetectorProfile(
        miss_rate={"C1": 0.5, "C2": 0.5, "C3": 0.05},
        fp_per_image=0.3,
        jitter_sigma=1.5,
        tp_conf=(0.75, 0.1),
        fp_conf=(0.3, 0.1),
    )
    return baseline, thermal


def complementary_config(seed: int = 42, n_images: int = 200) -> SynthConfig:
    b, t = complementary_profiles()
    return SynthConfig(seed=seed, n_images=n_images, baseline_profile=b, thermal_profile=t)


def oracle_profile() -> DetectorProfile:
    return DetectorProfile(miss_rate={c.key: 0.0 for c in CANONICAL_CLASSES})


def image_rng(seed: int, image_index: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, image_index, stream])))


def image_id(index: int) -> str:
    return f"img_{index:05d}"


def _ground_truth_one(cfg: SynthConfig, index: int) -> GroundTruthSet:
    rng = image_rng(cfg.seed, index, GT_STREAM)
    lo, hi = cfg.box_size
    objs = []
    for key in cfg.class_keys:
        a, b = cfg.objects_per_image[key]
        for _ in range(int(rng.integers(a, b + 1))):
            w = float(rng.integers(int(np.ceil(lo)), int(np.floor(hi)) + 1))
            h = float(rng.integers(int(np.ceil(lo)), int(np.floor(hi)) + 1))
            x = float(rng.integers(0, int(cfg.image_w - w) + 1))
            y = float(rng.integers(0, int(cfg.image_h - h) + 1))
            box = _clip(x, y, x + w, y + h, cfg.image_w, cfg.image_h)
            objs.append(GroundTruth(DEFAULT_REGISTRY.lookup(key), box))
    return GroundTruthSet(image_id(index), cfg.image_w, cfg.image_h, tuple(objs))


def generate_ground_truth(cfg: SynthConfig, threads: int = 1) -> list[GroundTruthSet]:
    return _map(lambda i: _ground_truth_one(cfg, i), range(cfg.n_images), threads)


def _clip(x1, y1, x2, y2, img_w, img_h) -> BoundingBox | None:
    x1, x2 = max(0.0, x1), min(float(img_w), x2)
    y1, y2 = max(0.0, y1), min(float(img_h), y2)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return BoundingBox(x1, y1, x2 - x1, y2 - y1)


def _conf(rng, mu_sd) -> float:
    mu, sd = mu_sd
    return float(np.clip(rng.normal(mu, sd), 0.0, 1.0))


def simulate_detector(gt: GroundTruthSet, profile: DetectorProfile, rng: np.random.Generator,
                      fp_classes=None, fp_box_size=None) -> DetectionSet:
    """Noisy detections of ``gt``: misses, jittered corners, Poisson false positives.

    ``fp_classes`` and ``fp_box_size`` bound the uniform draws for false
    positives; they default to the canonical classes and 5-25% of the image.
    """
    dets = []
    for obj in gt.objects:
        if rng.random() < profile.miss(obj.cls.key):
            continue
        b = obj.box
        sigma = profile.jitter_sigma
        j = rng.normal(0.0, sigma, size=4) if sigma > 0 else np.zeros(4)
        box = _clip(b.x + j[0], b.y + j[1], b.x2 + j[2], b.y2 + j[3], gt.image_w, gt.image_h)
        conf = _conf(rng, profile.tp_conf)
        if box is not None:
            dets.append(Detection(obj.cls, box, conf))
    classes = [DEFAULT_REGISTRY.lookup(k) for k in fp_classes] if fp_classes else list(CANONICAL_CLASSES)
    lo, hi = fp_box_size or (0.05 * min(gt.image_w, gt.image_h), 0.25 * min(gt.image_w, gt.image_h))
    n_fp = int(rng.poisson(profile.fp_per_image)) if profile.fp_per_image > 0 else 0
    for _ in range(n_fp):
        cls = classes[int(rng.integers(len(classes)))]
        w, h = rng.uniform(lo, hi, size=2)
        x = rng.uniform(0, gt.image_w - w)
        y = rng.uniform(0, gt.image_h - h)
        dets.append(Detection(cls, BoundingBox(float(x), float(y), float(w), float(h)), _conf(rng, profile.fp_conf)))
    return DetectionSet(gt.image_id, gt.image_w, gt.image_h, tuple(dets))


def simulate(cfg: SynthConfig, gts, profile: DetectorProfile, stream: int, threads: int = 1):
    def one(pair):
        i, gt = pair
        return simulate_detector(gt, profile, image_rng(cfg.seed, i, stream), cfg.class_keys, cfg.box_size)

    return _map(one, list(enumerate(gts)), threads)


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


@dataclass(frozen=True)
class ExperimentResult:
    baseline: object
    thermal: object
    ensemble: object

    @property
    def uplift(self) -> float:
        return self.ensemble.mean["ap50"] - max(self.baseline.mean["ap50"], self.thermal.mean["ap50"])

    def summary_line(self) -> str:
        return (
            f"baseline_map50={self.baseline.mean['ap50']:.6f} "
            f"thermal_map50={self.thermal.mean['ap50']:.6f} "
            f"ensemble_map50={self.ensemble.mean['ap50']:.6f} "
            f"uplift={self.uplift:.6f}"
        )


def run_pipeline(cfg: SynthConfig, fusion: FusionConfig | None = None,
                 eval_cfg: EvalConfig | None = None, threads: int = 1):
    """Generate, simulate, fuse and evaluate in memory.

    Returns ``(gts, baseline_sets, thermal_sets, fused_sets, ExperimentResult)``.
    """
    fusion = fusion or FusionConfig()
    gts = generate_ground_truth(cfg, threads)
    base = simulate(cfg, gts, cfg.baseline_profile, BASELINE_STREAM, threads)
    therm = simulate(cfg, gts, cfg.thermal_profile, THERMAL_STREAM, threads)
    fused = _map(lambda p: ensemble_fuse(p[0], p[1], fusion), list(zip(base, therm)), threads)
    result = ExperimentResult(
        evaluate(base, gts, eval_cfg, threads=threads),
        evaluate(therm, gts, eval_cfg, threads=threads),
        evaluate(fused, gts, eval_cfg, threads=threads),
    )
    return gts, base, therm, fused, result


def run_experiment(cfg: SynthConfig, out_dir, threads: int = 1) -> ExperimentResult:
    """Write gt/baseline/thermal/fused detections and three reports to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gts, base, therm, fused, result = run_pipeline(cfg, threads=threads)
    jsonio.write_json(out / "config.json", cfg.to_dict())
    save_ground_truth(gts, out / "gt.json")
    save_detections(base, out / "baseline.json")
    save_detections(therm, out / "thermal.json")
    save_detections(fused, out / "fused.json")
    jsonio.write_json(out / "report_baseline.json", result.baseline.to_dict())
    jsonio.write_json(out / "report_thermal.json", result.thermal.to_dict())
    jsonio.write_json(out / "report_ensemble.json", result.ensemble.to_dict())
    return result
