"""Named parameter storage, initialization and the backbone's shape table."""

import fnmatch
import hashlib
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from ..config import EncoderConfig
from ..errors import ConfigError
from ..numcore import DiffArray, Rng

Shape = Tuple[int, ...]

# how many leading name segments form a parameter's group
_GROUP_DEPTH = {"backbone": 2, "adapter": 2, "prompts": 2}


def param_group(name: str) -> str:
    parts = name.split(".")
    return ".".join(parts[: _GROUP_DEPTH.get(parts[0], 1)])


def is_bias(name: str) -> bool:
    return name.endswith(".bias")


def _linear_shapes(prefix: str, d_in: int, d_out: int) -> Dict[str, Shape]:
    return {f"{prefix}.weight": (d_in, d_out), f"{prefix}.bias": (d_out,)}


def _norm_shapes(prefix: str, d: int) -> Dict[str, Shape]:
    return {f"{prefix}.gain": (d,), f"{prefix}.bias": (d,)}


def _attention_shapes(prefix: str, d: int) -> Dict[str, Shape]:
    shapes: Dict[str, Shape] = {}
    for proj in ("q", "k", "v", "o"):
        shapes.update(_linear_shapes(f"{prefix}.{proj}", d, d))
    return shapes


def _mlp_shapes(prefix: str, d: int, ratio: int) -> Dict[str, Shape]:
    shapes = _linear_shapes(f"{prefix}.fc1", d, d * ratio)
    shapes.update(_linear_shapes(f"{prefix}.fc2", d * ratio, d))
    return shapes


def backbone_shapes(cfg: EncoderConfig) -> Dict[str, Shape]:
    """Every backbone parameter and its shape, in creation order."""
    shapes: Dict[str, Shape] = {}

    t = "backbone.text"
    shapes[f"{t}.tok_emb"] = (cfg.vocab, cfg.d_txt)
    shapes[f"{t}.pos_emb"] = (cfg.N_w + 2, cfg.d_txt)
    for layer in range(cfg.L):
        p = f"{t}.l{layer}"
        shapes.update(_norm_shapes(f"{p}.ln1", cfg.d_txt))
        shapes.update(_attention_shapes(f"{p}.attn", cfg.d_txt))
        shapes.update(_norm_shapes(f"{p}.ln2", cfg.d_txt))
        shapes.update(_mlp_shapes(f"{p}.mlp", cfg.d_txt, cfg.mlp_ratio))
    shapes.update(_norm_shapes(f"{t}.ln_f", cfg.d_txt))
    shapes[f"{t}.proj"] = (cfg.d_txt, cfg.embed_dim)

    v = "backbone.video"
    shapes.update(_linear_shapes(f"{v}.patch", cfg.patch_dim, cfg.d_vid))
    shapes[f"{v}.cls"] = (cfg.d_vid,)
    shapes[f"{v}.pos_space"] = (cfg.N_p, cfg.d_vid)
    shapes[f"{v}.pos_time"] = (cfg.T, cfg.d_vid)
    for layer in range(cfg.L):
        p = f"{v}.l{layer}"
        shapes.update(_norm_shapes(f"{p}.ln_t", cfg.d_vid))
        shapes.update(_attention_shapes(f"{p}.tattn", cfg.d_vid))
        shapes.update(_norm_shapes(f"{p}.ln_s", cfg.d_vid))
        shapes.update(_attention_shapes(f"{p}.sattn", cfg.d_vid))
        shapes.update(_norm_shapes(f"{p}.ln_m", cfg.d_vid))
        shapes.update(_mlp_shapes(f"{p}.mlp", cfg.d_vid, cfg.mlp_ratio))
    shapes.update(_norm_shapes(f"{v}.ln_f", cfg.d_vid))
    shapes[f"{v}.proj"] = (cfg.d_vid, cfg.embed_dim)
    return shapes


def init_values(name: str, shape: Shape, rng: Rng, std: Optional[float] = None) -> np.ndarray:
    """Initial values chosen from the parameter's name."""
    if name.endswith(".gain"):
        return np.ones(shape)
    if is_bias(name):
        return np.zeros(shape)
    if std is None:
        std = 1.0 / np.sqrt(shape[0]) if name.endswith((".weight", ".proj", ".h", ".g")) else 0.1
    return rng.normal(shape, std)


class ParameterStore:
    """Ordered name -> DiffArray map with trainability bookkeeping."""

    def __init__(self):
        self._params: Dict[str, DiffArray] = {}

    def add(self, name: str, values: np.ndarray, requires_grad: bool = False) -> DiffArray:
        if name in self._params:
            raise ConfigError(f"parameter {name} registered twice", field=name)
        param = DiffArray(values, requires_grad=requires_grad, name=name)
        self._params[name] = param
        return param

    def create(self, shapes: Dict[str, Shape], rng: Rng, std: Optional[float] = None) -> None:
        for name, shape in shapes.items():
            self.add(name, init_values(name, shape, rng.child(name), std))

    def __getitem__(self, name: str) -> DiffArray:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> Iterable[Tuple[str, DiffArray]]:
        return self._params.items()

    def names(self, prefix: Optional[str] = None) -> List[str]:
        return [n for n in self._params if prefix is None or n.startswith(prefix)]

    def count(self, names: Optional[Iterable[str]] = None) -> int:
        chosen = self._params if names is None else names
        return int(sum(self._params[n].size for n in chosen))

    def counts_by_group(self) -> Dict[str, int]:
        groups: Dict[str, int] = {}
        for name, param in self._params.items():
            group = param_group(name)
            groups[group] = groups.get(group, 0) + param.size
        return groups

    def set_trainable(self, predicate: Callable[[str], bool], frozen_patterns: Iterable[str] = ()) -> List[str]:
        patterns = list(frozen_patterns)
        trainable = []
        for name, param in self._params.items():
            on = predicate(name) and not any(fnmatch.fnmatch(name, p) for p in patterns)
            param.requires_grad = on
            param.zero_grad()
            if on:
                trainable.append(name)
        return trainable

    def trainable_names(self) -> List[str]:
        return [n for n, p in self._params.items() if p.requires_grad]

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.zero_grad()

    def checksum(self, names: Optional[Iterable[str]] = None) -> str:
        digest = hashlib.sha256()
        for name in self._params if names is None else names:
            digest.update(name.encode("utf-8"))
            digest.update(self._params[name].values.astype("<f8").tobytes())
        return digest.hexdigest()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.values.copy() for name, param in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> List[str]:
        """Copy matching arrays in place; returns the names that were loaded."""
        loaded = []
        for name, param in self._params.items():
            if name not in state:
                if strict:
                    raise ConfigError(f"checkpoint lacks parameter {name}", field=name)
                continue
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != param.shape:
                raise ConfigError(
                    f"parameter {name} has shape {values.shape} in checkpoint, expected {param.shape}",
                    field=name,
                )
            param.values[...] = values
            loaded.append(name)
        return loaded
