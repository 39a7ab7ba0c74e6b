"""Glottal closure instant detection toolkit: synthetic LF-model corpus
generation, a from-scratch fully-convolutional detector, EGG-based ground
truth extraction, and standard epoch-detection metrics."""

from .audio import AudioBuffer, normalize_peak, read_marks, read_wav, write_marks, write_wav
from .corpus import CorpusManifest, UtteranceSpec, build_corpus, load_manifest, synth_utterance
from .egg import EggConfig, extract_gci_from_egg, preprocess_egg
from .lf import LfPulseSpec, LfTiming, SourceTrack, lf_pulse, rd_to_timing, synth_source
from .metrics import EvalMode, EvalReport, aggregate, cycle_windows, evaluate
from .model import (ArchConfig, DetectConfig, Model, build_model, detect, load_weights,
                    marks_from_curve, predict_curve, save_weights)
from .targets import TargetCurve, glottal_flow_target, triangle_target
from .train import TrainConfig, WindowDataset, load_split, sample_batch, train

__all__ = [
    "AudioBuffer", "normalize_peak", "read_marks", "read_wav", "write_marks", "write_wav",
    "CorpusManifest", "UtteranceSpec", "build_corpus", "load_manifest", "synth_utterance",
    "EggConfig", "extract_gci_from_egg", "preprocess_egg",
    "LfPulseSpec", "LfTiming", "SourceTrack", "lf_pulse", "rd_to_timing", "synth_source",
    "EvalMode", "EvalReport", "aggregate", "cycle_windows", "evaluate",
    "ArchConfig", "DetectConfig", "Model", "build_model", "detect", "load_weights",
    "marks_from_curve", "predict_curve", "save_weights",
    "TargetCurve", "glottal_flow_target", "triangle_target",
    "TrainConfig", "WindowDataset", "load_split", "sample_batch", "train",
    "FcnGciDetector",
]

from .estimator import FcnGciDetector  # noqa: E402  (depends on the modules above)

__version__ = "0.1.0"
