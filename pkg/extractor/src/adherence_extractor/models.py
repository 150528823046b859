"""Torch model backends and their embedding taps.

``vggish`` reproduces the torchvggish module layout (its published
state dict loads directly). The OpenL3 and CLAP backends are compact
stand-ins with the documented tap dimensionalities; loading published
checkpoints for those requires converting the upstream weights to this
module's layout first (see WEIGHTS.md).

Every backend runs in eval mode with deterministic seeded initialization
when no weights are supplied and ``random_init`` is requested, so that the
full preprocessing-inference-serialization path stays reproducible.
"""

import numpy as np
import torch
from torch import nn

from . import preprocess


class MissingWeightsError(RuntimeError):
    pass


def _load_or_init(module: nn.Module, weights_path, random_init: bool, name: str):
    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        module.load_state_dict(state)
    elif random_init:
        generator = torch.Generator().manual_seed(
            int.from_bytes(name.encode(), "little") % 2**31
        )
        with torch.no_grad():
            for p in module.parameters():
                p.copy_(torch.randn(p.shape, generator=generator) * 0.02)
    else:
        raise MissingWeightsError(
            f"no weights for {name!r}: pass --weights FILE, or --random-init "
            "for a deterministic randomly initialized model (pipeline testing)"
        )
    module.eval()
    return module


class Vggish(nn.Module):
    """torchvggish-compatible topology; the last feature layer is 128-d."""

    def __init__(self):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(1, 64, 3, padding=1), nn.ReLU(True), nn.MaxPool2d(2, 2),
            nn.Conv2d(64, 128, 3, padding=1), nn.ReLU(True), nn.MaxPool2d(2, 2),
            nn.Conv2d(128, 256, 3, padding=1), nn.ReLU(True),
            nn.Conv2d(256, 256, 3, padding=1), nn.ReLU(True), nn.MaxPool2d(2, 2),
            nn.Conv2d(256, 512, 3, padding=1), nn.ReLU(True),
            nn.Conv2d(512, 512, 3, padding=1), nn.ReLU(True), nn.MaxPool2d(2, 2),
        )
        self.embeddings = nn.Sequential(
            nn.Linear(512 * 4 * 6, 4096), nn.ReLU(True),
            nn.Linear(4096, 4096), nn.ReLU(True),
            nn.Linear(4096, 128), nn.ReLU(True),
        )

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        x = self.features(patches)  # (n, 512, 6, 4)
        x = x.permute(0, 2, 3, 1).contiguous().flatten(1)
        return self.embeddings(x)

    def embed_window(self, samples: np.ndarray, rate: int) -> np.ndarray:
        patches = preprocess.vggish_patches(samples, rate)
        with torch.no_grad():
            out = self(torch.from_numpy(patches[:, None, :, :]))
        return out.mean(dim=0).numpy()  # mean-pool patch embeddings


class OpenL3(nn.Module):
    """Compact mel-256 CNN ending in the documented 6144-d flatten."""

    def __init__(self):
        super().__init__()

        def block(cin, cout, pool):
            return [nn.Conv2d(cin, cout, 3, padding=1), nn.BatchNorm2d(cout),
                    nn.ReLU(True), nn.MaxPool2d(pool)]

        self.body = nn.Sequential(
            *block(1, 32, 4),    # (256, 190) -> (64, 47)
            *block(32, 64, 2),   # -> (32, 23)
            *block(64, 128, 2),  # -> (16, 11)
            *block(128, 512, (4, 3)),  # -> (4, 3); flatten 512*4*3 = 6144
        )

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        return self.body(spec).flatten(1)

    def embed_window(self, samples: np.ndarray, rate: int) -> np.ndarray:
        frames = preprocess.openl3_frames(samples, rate)
        with torch.no_grad():
            out = self(torch.from_numpy(frames[:, None, :, :]))
        return out.mean(dim=0).numpy()


class ClapAudio(nn.Module):
    """Compact audio encoder with the three documented projection taps.

    tap 0: first audio projection (512), tap 1: second projection (512),
    tap 2: output layer (128).
    """

    def __init__(self):
        super().__init__()

        def block(cin, cout):
            return [nn.Conv2d(cin, cout, 3, padding=1), nn.BatchNorm2d(cout),
                    nn.ReLU(True), nn.MaxPool2d(2)]

        self.encoder = nn.Sequential(
            *block(1, 32), *block(32, 64), *block(64, 128), *block(128, 768),
            nn.AdaptiveAvgPool2d(1),
        )
        self.projection1 = nn.Linear(768, 512)
        self.projection2 = nn.Linear(512, 512)
        self.output = nn.Linear(512, 128)

    def forward(self, spec: torch.Tensor) -> dict:
        pooled = self.encoder(spec).flatten(1)
        p1 = self.projection1(pooled)
        p2 = self.projection2(torch.relu(p1))
        out = self.output(torch.relu(p2))
        return {"clap0": p1, "clap1": p2, "clap2": out}

    def embed_window(self, samples: np.ndarray, rate: int, tap: str) -> np.ndarray:
        spec = preprocess.clap_logmel(samples, rate)
        with torch.no_grad():
            taps = self(torch.from_numpy(spec[:, None, :, :]))
        return taps[tap].mean(dim=0).numpy()


class _ClapTap:
    def __init__(self, model: ClapAudio, tap: str):
        self._model = model
        self._tap = tap

    def embed_window(self, samples, rate):
        return self._model.embed_window(samples, rate, self._tap)


def build_backend(name: str, weights=None, random_init: bool = False):
    """Instantiate the named backend ready for inference."""
    if name == "vggish":
        return _load_or_init(Vggish(), weights, random_init, name)
    if name == "openl3":
        return _load_or_init(OpenL3(), weights, random_init, name)
    if name in ("clap0", "clap1", "clap2"):
        model = _load_or_init(ClapAudio(), weights, random_init, "clap")
        return _ClapTap(model, name)
    raise ValueError(f"unknown model {name!r}")
