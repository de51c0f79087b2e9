"""Backward pipeline: an oscillating martingale becomes a monotone map that is not differentiable."""

from dyadot.martingale import OscillationSpec
from dyadot.pipeline import backward_manifest, replay, run_backward

spec = OscillationSpec(7, "3/2", 1, "01" * 24)
run = run_backward(spec)
print("witness depths up:  ", run.oscillation.s_up)
print("witness depths down:", run.oscillation.s_down)
print("probe verdict:      ", run.verdict)
print("unstable scales:    ", run.report.unstable_scales())

text = backward_manifest(run)
print("manifest replays identically:", replay(text) == text)
