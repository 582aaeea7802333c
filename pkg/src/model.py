"""
GDS-Mamba classifier
---------
Three disentangled sparse Mamba branches (spectral, temporal, spatial) and
the mini-batch graph stream, fused into one feature per patch and mapped to
class logits.
"""
from typing import Dict, List, Optional

import numpy as np

from .errors import ConfigurationError
from .graph import CenterStandardizer, GraphBatch, GraphStream, build_graph, center_pixel_vectors
from .nn import Linear, Module
from .schemas import ModelConfig
from .sparse import AttentionScorer, TokenScores, cosine_center_scores, sparse_branch, topk_mask
from .ssm import MambaStack
from .tensor import Tensor, concat, mean, no_grad, relu, reshape, resolve_dtype
from .tokens import MiniBatch, SpatialTokenizer, SpectralTokenizer, TemporalTokenizer


class SparseMambaBranch(Module):
    """Tokenizer -> scorer -> top-k sparse Mamba -> projection of the pooled tokens"""

    def __init__(self, tokenizer: Module, token_width: int, config: ModelConfig, budget: int, rng, scorer=None):
        super().__init__()
        dtype = config.precision
        self.budget = budget
        self.fill = config.fill
        self.tokenizer = tokenizer
        self.scorer = scorer
        self.mamba = MambaStack(
            token_width,
            config.mamba_depth,
            rng,
            state_size=config.state_size,
            expand=config.expand,
            conv_width=config.conv_width,
            scan_mode=config.scan_mode,
            dtype=dtype,
        )
        self.proj = Linear(token_width, config.fusion_width, rng, dtype=dtype)

    def score(self, tokens: Tensor) -> TokenScores:
        if self.scorer is None:
            return cosine_center_scores(tokens)
        return self.scorer(tokens)

    def forward(self, cubes: Tensor) -> Tensor:
        """Token outputs [rows, tokens, width] with unselected rows zero"""
        tokens = self.tokenizer(cubes).data
        scores = self.score(tokens)
        mask = topk_mask(scores, self.budget)
        # a full budget routes nothing, so the scores stay off the graph
        routed = scores if self.budget < scores.source_len else None
        return sparse_branch(tokens, mask, self.mamba, routed, self.fill)


def fuse(
    pooled: List[Tensor],
    projections: List[Linear],
    gcn_features: Tensor,
    fusion: Linear,
) -> Tensor:
    """
    Project each pooled branch vector to the fusion width, concatenate with
    the GCN feature and apply linear + ReLU.
    """
    parts = [proj(vector) for proj, vector in zip(projections, pooled)]
    return relu(fusion(concat(parts + [gcn_features], axis=-1)))


def classification_head(fused: Tensor, head: Linear) -> Tensor:
    return head(fused)


class GDSMamba(Module):
    """
    End-to-end model for one `ModelConfig`. Ablation switches drop a branch,
    replace the graph by the identity, open every sparse budget, or replace
    the three branches by a single Mamba over joint spectral-temporal tokens.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(config.seed)
        dtype = config.precision
        budgets = config.budgets()
        self.branch_names: List[str] = []

        if config.disentangle:
            if config.use_spectral:
                self.spectral = SparseMambaBranch(
                    SpectralTokenizer(config.T, config.C0, config.C, rng, dtype),
                    config.T, config, budgets["k_F"], rng,
                    scorer=AttentionScorer(config.T, config.heads, config.d_k, rng, dtype),
                )
                self.branch_names.append("spectral")
            if config.use_temporal:
                self.temporal = SparseMambaBranch(
                    TemporalTokenizer(config.T, config.C0, config.C, rng, dtype),
                    config.C, config, budgets["k_T"], rng,
                    scorer=AttentionScorer(config.C, config.heads, config.d_k, rng, dtype),
                )
                self.branch_names.append("temporal")
            if config.use_spatial:
                self.spatial = SparseMambaBranch(
                    SpatialTokenizer(config.T, config.C0, config.d, rng, dtype),
                    config.d, config, budgets["k_s"], rng,
                )
                self.branch_names.append("spatial")
        else:
            self.joint = SparseMambaBranch(
                SpatialTokenizer(config.T, config.C0, config.d, rng, dtype),
                config.d, config, budgets["k_s"], rng,
            )
            self.branch_names.append("joint")

        self.standardizer = CenterStandardizer(config.T * config.C0, raw=config.raw_center)
        self.graph_stream = GraphStream(
            config.pixels * config.T * config.C0,
            config.gcn_width,
            config.gcn_depth,
            rng,
            use_graph=config.use_graph,
            dtype=dtype,
        )
        width = config.fusion_width * len(self.branch_names) + config.gcn_width
        self.fusion = Linear(width, config.fusion_width, rng, dtype=dtype)
        self.head = Linear(config.fusion_width, config.K, rng, dtype=dtype)

    @property
    def dtype(self) -> np.dtype:
        return resolve_dtype(self.config.precision)

    def branches(self) -> Dict[str, SparseMambaBranch]:
        return {name: self._modules[name] for name in self.branch_names}

    def fit_standardizer(self, cubes: np.ndarray) -> None:
        """Center-vector statistics of the training split"""
        self.standardizer.fit(center_pixel_vectors(cubes))

    def check_batch(self, batch: MiniBatch) -> None:
        expected = (self.config.H, self.config.W, self.config.T, self.config.C0)
        actual = tuple(np.shape(batch.cubes)[1:])
        for axis, (want, got) in enumerate(zip(expected, actual), start=1):
            if want != got:
                raise ConfigurationError(
                    f"Batch axis {axis} ({'HWTC'[axis - 1]}) has size {got}, model expects {want}."
                )

    def graph_for(self, batch: MiniBatch) -> Optional[GraphBatch]:
        if not self.config.use_graph:
            return None
        if batch.graph is not None:
            return batch.graph
        return build_graph(batch.cubes, self.standardizer, self.config.sigma, self.config.self_loop)

    def pooled_branch(self, name: str, cubes: Tensor) -> Tensor:
        """Mean over tokens, and for per-pixel branches over the H*W pixels"""
        out = mean(self._modules[name](cubes), axis=1)
        if name in ("spectral", "temporal"):
            batch = cubes.shape[0]
            out = mean(reshape(out, (batch, self.config.pixels, out.shape[-1])), axis=1)
        return out

    def forward(self, batch: MiniBatch, training: bool = False) -> Tensor:
        """Logits [B, K]"""
        self.check_batch(batch)
        self.train(training)
        cubes = batch.tensor(self.dtype)
        pooled = [self.pooled_branch(name, cubes) for name in self.branch_names]
        gcn_features = self.graph_stream(reshape(cubes, (batch.size, -1)), self.graph_for(batch))
        projections = [self._modules[name].proj for name in self.branch_names]
        fused = fuse(pooled, projections, gcn_features, self.fusion)
        return classification_head(fused, self.head)

    def predict(self, batch: MiniBatch) -> np.ndarray:
        with no_grad():
            logits = self.forward(batch, training=False)
        return np.argmax(logits.data, axis=1)


def forward(batch: MiniBatch, model: GDSMamba, training: bool = False) -> Tensor:
    return model(batch, training)
