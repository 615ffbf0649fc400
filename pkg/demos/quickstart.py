"""Minimal end-to-end run: make data, train briefly, inspect one prediction.

This trades accuracy for speed (a few epochs on a few dozen small scenes);
see baseline_gap.py for a training run that actually separates the strands
well. Outputs land in ./quickstart_out.
"""

import os

import numpy as np

import strandseg as ss

out_dir = "quickstart_out"
os.makedirs(out_dir, exist_ok=True)

# --- data ------------------------------------------------------------------
# 60 scenes, 48x48, two curves each that are guaranteed to cross
spec = ss.SceneSpec(height=48, width=48)
seeds = ss.scene_seeds(7, 60)
scenes = [ss.generate_scene(spec, int(s)) for s in seeds]
print(f"generated {len(scenes)} scenes, "
      f"{sum(len(s.instances) for s in scenes)} instances total")

# --- training --------------------------------------------------------------
rng = np.random.default_rng(0)
perm = rng.permutation(len(scenes))
val = [scenes[i] for i in perm[:12]]
tr = [scenes[i] for i in perm[12:]]

result = ss.train(
    tr, val,
    ss.LossConfig(),
    ss.OptimConfig(learning_rate=1e-3, epochs=15),
    augment_params=None,
    rng_seed=0,
    progress=lambda e, t, v: print(f"  epoch {e:2d}  train {t:.4f}  val {v:.4f}"),
)
print(f"best validation epoch: {result.best_epoch}")

# --- inference on a fresh scene ---------------------------------------------
probe = ss.generate_scene(spec, 123456)
pipe = ss.PipelineConfig(
    seg_threshold=0.6,
    mean_shift=ss.MeanShiftConfig(bandwidth=0.75, merge_radius=1.6,
                                  coord_scale=0.25),
    resolve=ss.ResolveConfig(),
)
instances, fg, diag = ss.infer(result.params, probe.image, pipe)
print(f"predicted {len(instances)} instance(s) over {diag.fg_pixels} "
      f"foreground pixels ({diag.multi_assigned_pixels} shared)")

scores = ss.instance_ap_ar(instances, probe.instances)
print(f"AP {scores['ap']:.3f}  AR {scores['ar']:.3f} over "
      f"{len(scores['per_threshold'])} IoU thresholds")

# --- artifacts ---------------------------------------------------------------
ss.write_pgm(os.path.join(out_dir, "probe.pgm"), probe.image)
ss.write_ppm(os.path.join(out_dir, "predicted.ppm"),
             ss.render_overlay(probe.image, instances))
ss.write_ppm(os.path.join(out_dir, "truth.ppm"),
             ss.render_overlay(probe.image, probe.instances))
print(f"wrote probe.pgm / predicted.ppm / truth.ppm to {out_dir}/")
