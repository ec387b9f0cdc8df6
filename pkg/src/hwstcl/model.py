"""Full model: feature lifting, joint propagation, and diagnostic readout."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .connectivity import SubjectGraphs
from .encoders import EncoderStack
from .hwcl import HwclConfig, hwcl
from .readout import GruReadout, scaled_laplacian_values
from .stgraph import HawkesKernel, JointOperator


@dataclass
class ModelConfig:
    hidden: int = 64
    n_spatial: int = 2
    n_stgin: int = 3
    L: int = 3
    direction: str = "causal"
    joint_temporal: bool = True
    alpha_init: float = 1.0
    beta_init: float = 0.5
    cheb_K: int = 2
    cheb_hidden: int = 64
    embed_dim: int = 256
    gru_hidden: int = 256
    dropout: float = 0.2


@dataclass
class Batch:
    X: Tensor
    op: JointOperator
    labels: np.ndarray
    subject_ids: list[str]

    @property
    def B(self) -> int:
        return self.op.B

    @property
    def T(self) -> int:
        return self.op.T

    @property
    def N(self) -> int:
        return self.op.N


class HWSTCLModel:
    def __init__(self, d_in: int, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.d_in = d_in
        self.encoder = EncoderStack(d_in, cfg.hidden, rng, cfg.n_spatial, cfg.n_stgin)
        self.kernel = HawkesKernel(cfg.L, cfg.alpha_init, cfg.beta_init)
        self.readout = GruReadout(cfg.hidden, rng, cfg.cheb_K, cfg.cheb_hidden, cfg.embed_dim,
                                  cfg.gru_hidden, cfg.dropout)

    # -- parameters -----------------------------------------------------
    def encoder_parameters(self) -> dict[str, Tensor]:
        return {**self.encoder.parameters(), **self.kernel.parameters()}

    def parameters(self) -> dict[str, Tensor]:
        params = self.encoder_parameters()
        params.update({f"readout.{k}": v for k, v in self.readout.parameters().items()})
        return params

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = self.parameters()
        missing = [k for k in params if k not in state]
        if strict and missing:
            raise KeyError(f"checkpoint lacks parameters: {missing[:5]}")
        for k, p in params.items():
            if k in state:
                arr = np.asarray(state[k], dtype=np.float64)
                if arr.shape != p.shape:
                    raise ValueError(f"{k}: checkpoint shape {arr.shape} != model shape {p.shape}")
                p.data = arr.copy()

    def config_dict(self) -> dict:
        return {"d_in": self.d_in, **asdict(self.cfg)}

    # -- forward --------------------------------------------------------
    def make_batch(self, subjects: Sequence[SubjectGraphs], full_pattern: bool = False) -> Batch:
        X = np.concatenate([s.X.reshape(-1, s.X.shape[-1]) for s in subjects])
        A = np.stack([s.A for s in subjects])
        op = JointOperator(A, self.kernel, self.cfg.direction, temporal=self.cfg.joint_temporal,
                           full_pattern=full_pattern)
        labels = np.array([s.label for s in subjects], dtype=np.float64)
        return Batch(Tensor(X), op, labels, [s.subject_id for s in subjects])

    def encode(self, batch: Batch) -> Tensor:
        """Spatio-temporal node embeddings Z of shape (B*T*N, hidden)."""
        return self.encoder(batch.X, batch.op)

    def contrastive(self, Z: Tensor, batch: Batch, cfg: HwclConfig):
        Z4 = ad.reshape(Z, (batch.B, batch.T, batch.N, Z.shape[-1]))
        return hwcl(Z4, self.kernel, cfg)

    def logits(self, Z: Tensor, batch: Batch, *, training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        op = batch.op
        lap = scaled_laplacian_values(op.spatial, op.spatial_values)
        E = self.readout.window_embeddings(Z, op.spatial, lap, batch.B, batch.T, batch.N,
                                           training=training, rng=rng)
        return self.readout.sequence_logits(E)

    def predict_proba(self, subjects: Sequence[SubjectGraphs], batch_size: int = 64) -> np.ndarray:
        out = []
        with ad.no_grad():
            for i in range(0, len(subjects), batch_size):
                batch = self.make_batch(subjects[i:i + batch_size])
                out.append(ad.sigmoid(self.logits(self.encode(batch), batch)).data)
        return np.concatenate(out) if out else np.zeros(0)
