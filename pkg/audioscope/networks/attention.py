"""
Audio-Visual Attention - joint and separable self/cross-modal attention encoders

Audio features Z_A carry axes (M, T, D) and video features Z_V carry (G, T, D),
optionally with a leading BATCH axis. Which axes an attention call normalizes over
is the only difference between the joint and separable variants; axes that the
query shares with the keys but does not attend over are aligned elementwise.
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from torch import nn

from audioscope.exceptions import ConfigException, ContractException, DimensionException
from audioscope.models.configs import AttentionConfig, AttentionVariant
from audioscope.numerics.tensor import (
    Axis,
    DenseLayer,
    FeatureTensor,
    LayerNorm,
    dropout,
    query_axis,
    softmax_over_axes,
    tensor_inner_product,
)

logger = logging.getLogger(__name__)

BLOCK_TAG = "block"
POOL_TAG = "pool"


# ==================== Score Accounting ====================

_ACTIVE_COUNTERS: List["ScoreCounter"] = []


class ScoreCounter:
    """
    Counts attended (query, key) pairs per attention tag while active.

    Pairs are counted per example and per head, so the count is independent of
    the batch size and of H.
    """

    def __init__(self):
        self.pairs: Dict[str, int] = defaultdict(int)

    def __enter__(self) -> "ScoreCounter":
        _ACTIVE_COUNTERS.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_COUNTERS.remove(self)

    def record(self, tag: str, weights: FeatureTensor) -> None:
        count = weights.data.numel()
        for axis in (Axis.HEAD, Axis.BATCH):
            if weights.has(axis):
                count //= weights.size(axis)
        self.pairs[tag] += count


# ==================== Attention Maps ====================

@dataclass
class AttentionMap:
    """
    Attention weights of one multi-head call plus the axis roles needed to read a
    spatial heat map out of them.
    """
    weights: FeatureTensor
    attend_axes: Tuple[str, ...]
    num_sources: int
    source_axis: str
    space_axis: str
    space_offset: int
    time_axis: str
    key_time_axis: Optional[str] = None

    def spatial(self, batch_index: int = 0) -> np.ndarray:
        """Head-summed spatial attention of each source query, shaped (T, M, G)"""
        w = self.weights
        if w.has(Axis.BATCH):
            w = w.narrow(Axis.BATCH, batch_index, 1).sum([Axis.BATCH])
        w = w.sum([Axis.HEAD])
        if self.key_time_axis is not None:
            w = w.sum([self.key_time_axis])
        grid = w.size(self.space_axis) - self.space_offset
        w = w.narrow(self.space_axis, self.space_offset, grid)
        w = w.narrow(self.source_axis, 0, self.num_sources)
        w = w.permute([self.time_axis, self.source_axis, self.space_axis])
        return w.data.detach().cpu().numpy().astype(np.float64)


# ==================== Attention Primitives ====================

def merge_heads(x: FeatureTensor) -> FeatureTensor:
    axes = [a for a in x.axes if a not in (Axis.HEAD, Axis.DEPTH)] + [Axis.HEAD, Axis.DEPTH]
    x = x.permute(axes)
    data = x.data.reshape(*x.data.shape[:-2], x.data.shape[-2] * x.data.shape[-1])
    return FeatureTensor(data, tuple(axes[:-2]) + (Axis.DEPTH,))


class Attention(nn.Module):
    """
    Scaled dot-product attention over an arbitrary set of axes.

    scores = <f_K(K), f_Q(Q)>_{D} / sqrt(d), softmax over the attended axes, then
    the weighted sum of f_V(V), where d is the projected depth. With `heads` set
    every projection holds one map per head, D -> head_depth, and the output
    gains a HEAD axis in front of DEPTH.
    """

    def __init__(self, depth: int, heads: Optional[int] = None, tag: str = BLOCK_TAG,
                 head_depth: Optional[int] = None):
        super().__init__()
        self.depth = depth
        self.head_depth = head_depth or depth
        self.tag = tag
        self.query = DenseLayer(depth, self.head_depth, heads)
        self.key = DenseLayer(depth, self.head_depth, heads)
        self.value = DenseLayer(depth, self.head_depth, heads)

    def forward(
        self,
        query: FeatureTensor,
        key: FeatureTensor,
        value: FeatureTensor,
        attend_axes: Iterable[str],
    ) -> Tuple[FeatureTensor, FeatureTensor]:
        attend_axes = tuple(attend_axes)
        missing = [a for a in attend_axes if not key.has(a)]
        if missing:
            raise ContractException(f"Attended axes {missing} absent from keys {key.axes}")
        if key.axes != value.axes or key.data.shape != value.data.shape:
            raise DimensionException(f"Keys {key.shape} and values {value.shape} differ")

        renames = {a: query_axis(a) for a in attend_axes if query.has(a)}
        q = self.query(query.rename(renames))
        k = self.key(key)
        v = self.value(value)

        scores = tensor_inner_product(k, q, [Axis.DEPTH])
        scores = scores.with_data(scores.data / math.sqrt(self.head_depth))
        weights = softmax_over_axes(scores, attend_axes)
        for counter in _ACTIVE_COUNTERS:
            counter.record(self.tag, weights)

        out = tensor_inner_product(weights, v, attend_axes)
        axes = query.axes
        if out.has(Axis.HEAD) and not query.has(Axis.HEAD):
            axes = axes[:-1] + (Axis.HEAD, axes[-1])
        out = out.rename({new: old for old, new in renames.items()}).permute(axes)
        return out, weights


def attend(
    query: FeatureTensor,
    key: FeatureTensor,
    value: FeatureTensor,
    attend_axes: Iterable[str],
    attention: Attention,
) -> FeatureTensor:
    """Single-head attention with the projections held by `attention`"""
    out, _ = attention(query, key, value, attend_axes)
    return out


class MultiHeadAttention(nn.Module):
    """
    H parallel attention heads, each projecting the full depth D to D/H, whose
    outputs are concatenated on DEPTH and mixed by an output dense layer. Keys and
    values are read from the same tensor.
    """

    def __init__(self, depth: int, num_heads: int, tag: str = BLOCK_TAG):
        super().__init__()
        if depth % num_heads:
            raise ConfigException(f"Depth {depth} is not divisible by {num_heads} heads", key="num_heads")
        self.depth = depth
        self.num_heads = num_heads
        self.attention = Attention(depth, heads=num_heads, tag=tag, head_depth=depth // num_heads)
        self.output = DenseLayer(depth, depth)
        self.record_weights = False
        self.last_weights: Optional[FeatureTensor] = None

    def forward(
        self, query: FeatureTensor, value: FeatureTensor, attend_axes: Iterable[str]
    ) -> Tuple[FeatureTensor, FeatureTensor]:
        heads, weights = self.attention(query, value, value, attend_axes)
        if self.record_weights:
            self.last_weights = FeatureTensor(weights.data.detach(), weights.axes)
        out = self.output(merge_heads(heads)).permute(query.axes)
        return out, weights


def multi_head_attention(
    query: FeatureTensor,
    value: FeatureTensor,
    attend_axes: Iterable[str],
    mha: MultiHeadAttention,
) -> Tuple[FeatureTensor, FeatureTensor]:
    return mha(query, value, attend_axes)


# ==================== Blocks ====================

class SelfAttentionBlock(nn.Module):
    """b = MHA(Z, Z) + Z; out = LN(f(Dropout(b)) + b)"""

    def __init__(self, cfg: AttentionConfig, attend_axes: Sequence[str]):
        super().__init__()
        self.attend_axes = tuple(attend_axes)
        self.dropout_rate = cfg.dropout_rate
        self.mha = MultiHeadAttention(cfg.depth, cfg.num_heads)
        self.dense = DenseLayer(cfg.depth, cfg.depth)
        self.norm = LayerNorm(cfg.depth)

    def forward(self, z: FeatureTensor) -> FeatureTensor:
        attended, _ = self.mha(z, z, self.attend_axes)
        b = z.with_data(attended.data + z.data)
        update = self.dense(dropout(b, self.dropout_rate, self.training))
        return self.norm(b.with_data(update.data + b.data))


def sa_block(z: FeatureTensor, block: SelfAttentionBlock) -> FeatureTensor:
    return block(z)


class CrossModalUpdate(nn.Module):
    """
    One direction of cross-modal attention:
    a1 = MHA(X, C); a2 = LN(a1 + X); out = LN(f(Dropout(a2)) + X)
    """

    def __init__(self, cfg: AttentionConfig, attend_axes: Sequence[str]):
        super().__init__()
        self.attend_axes = tuple(attend_axes)
        self.dropout_rate = cfg.dropout_rate
        self.mha = MultiHeadAttention(cfg.depth, cfg.num_heads)
        self.dense = DenseLayer(cfg.depth, cfg.depth)
        self.inner_norm = LayerNorm(cfg.depth)
        self.outer_norm = LayerNorm(cfg.depth)

    def forward(self, x: FeatureTensor, context: FeatureTensor) -> FeatureTensor:
        a1, _ = self.mha(x, context, self.attend_axes)
        a2 = self.inner_norm(x.with_data(a1.data + x.data))
        update = self.dense(dropout(a2, self.dropout_rate, self.training))
        return self.outer_norm(x.with_data(update.data + x.data))


class JointCMABlock(nn.Module):
    """Audio attends over video {G, T}; video attends over audio {M, T}; both read the block inputs"""

    def __init__(self, cfg: AttentionConfig):
        super().__init__()
        self.audio = CrossModalUpdate(cfg, (Axis.SPACE, Axis.TIME))
        self.video = CrossModalUpdate(cfg, (Axis.SRC, Axis.TIME))

    def forward(self, a: FeatureTensor, v: FeatureTensor) -> Tuple[FeatureTensor, FeatureTensor]:
        return self.audio(a, v), self.video(v, a)


class SeparableCMABlock(nn.Module):
    """Self-attention over T per modality, then cross-modal attention over {G} / {M} at aligned t"""

    def __init__(self, cfg: AttentionConfig):
        super().__init__()
        self.audio_time = SelfAttentionBlock(cfg, (Axis.TIME,))
        self.video_time = SelfAttentionBlock(cfg, (Axis.TIME,))
        self.audio = CrossModalUpdate(cfg, (Axis.SPACE,))
        self.video = CrossModalUpdate(cfg, (Axis.SRC,))

    def forward(self, a: FeatureTensor, v: FeatureTensor) -> Tuple[FeatureTensor, FeatureTensor]:
        a = self.audio_time(a)
        v = self.video_time(v)
        return self.audio(a, v), self.video(v, a)


def joint_cma_block(a: FeatureTensor, v: FeatureTensor, block: JointCMABlock) -> Tuple[FeatureTensor, FeatureTensor]:
    return block(a, v)


def separable_cma_block(
    a: FeatureTensor, v: FeatureTensor, block: SeparableCMABlock
) -> Tuple[FeatureTensor, FeatureTensor]:
    return block(a, v)


class AttentionalPooling(nn.Module):
    """z = MHA_T(sum_t z_t, z); no residual"""

    def __init__(self, cfg: AttentionConfig):
        super().__init__()
        self.mha = MultiHeadAttention(cfg.depth, cfg.num_heads, tag=POOL_TAG)

    def forward(self, z: FeatureTensor) -> FeatureTensor:
        query = z.sum([Axis.TIME])
        pooled, _ = self.mha(query, z, (Axis.TIME,))
        return pooled


def attentional_pool(z: FeatureTensor, pooling: AttentionalPooling) -> FeatureTensor:
    return pooling(z)


# ==================== Encoders ====================

class AudioVisualEncoder(nn.Module):
    """Maps (Z_A, Z_V) to one embedding per source, axes (M, D)"""

    variant: AttentionVariant

    def __init__(self, cfg: AttentionConfig):
        super().__init__()
        self.cfg = cfg
        self.pool = AttentionalPooling(cfg)

    def forward(self, z_a: FeatureTensor, z_v: FeatureTensor) -> FeatureTensor:
        self._check_alignment(z_a, z_v)
        return self.pool(self.encode(z_a, z_v))

    def encode(self, z_a: FeatureTensor, z_v: FeatureTensor) -> FeatureTensor:
        raise NotImplementedError

    @staticmethod
    def _check_alignment(z_a: FeatureTensor, z_v: FeatureTensor) -> None:
        for axis in (Axis.TIME, Axis.DEPTH):
            if z_a.size(axis) != z_v.size(axis):
                raise DimensionException(
                    f"Audio and video disagree on {axis}: {z_a.size(axis)} vs {z_v.size(axis)}",
                    details={"audio": z_a.shape, "video": z_v.shape},
                )
        if z_a.has(Axis.BATCH) != z_v.has(Axis.BATCH) or (
            z_a.has(Axis.BATCH) and z_a.size(Axis.BATCH) != z_v.size(Axis.BATCH)
        ):
            raise DimensionException("Audio and video batch axes differ")

    def map_source(self) -> MultiHeadAttention:
        """The multi-head call whose weights define the exported spatial heat map"""
        raise NotImplementedError

    def capture_maps(self, enabled: bool = True) -> None:
        self.map_source().record_weights = enabled

    def attention_map(self, num_sources: int) -> AttentionMap:
        mha = self.map_source()
        if mha.last_weights is None:
            raise ContractException("No attention weights recorded; enable capture_maps before the forward pass")
        return self._describe_map(mha.last_weights, num_sources)

    def _describe_map(self, weights: FeatureTensor, num_sources: int) -> AttentionMap:
        raise NotImplementedError


def _joint(z_a: FeatureTensor, z_v: FeatureTensor) -> FeatureTensor:
    a = z_a.rename({Axis.SRC: Axis.JOINT})
    v = z_v.rename({Axis.SPACE: Axis.JOINT}).permute(a.axes)
    return FeatureTensor.concat([a, v], Axis.JOINT)


def _split(z: FeatureTensor, num_sources: int) -> Tuple[FeatureTensor, FeatureTensor]:
    total = z.size(Axis.JOINT)
    a = z.narrow(Axis.JOINT, 0, num_sources).rename({Axis.JOINT: Axis.SRC})
    v = z.narrow(Axis.JOINT, num_sources, total - num_sources).rename({Axis.JOINT: Axis.SPACE})
    return a, v


class JointSAEncoder(AudioVisualEncoder):
    variant = AttentionVariant.JOINT_SA

    def __init__(self, cfg: AttentionConfig):
        super().__init__(cfg)
        self.blocks = nn.ModuleList(
            [SelfAttentionBlock(cfg, (Axis.JOINT, Axis.TIME)) for _ in range(cfg.num_blocks)]
        )

    def encode(self, z_a: FeatureTensor, z_v: FeatureTensor) -> FeatureTensor:
        z = _joint(z_a, z_v)
        for block in self.blocks:
            z = block(z)
        a, _ = _split(z, z_a.size(Axis.SRC))
        return a.permute(z_a.axes)

    def map_source(self) -> MultiHeadAttention:
        return self.blocks[-1].mha

    def _describe_map(self, weights: FeatureTensor, num_sources: int) -> AttentionMap:
        return AttentionMap(
            weights=weights,
            attend_axes=(Axis.JOINT, Axis.TIME),
            num_sources=num_sources,
            source_axis=query_axis(Axis.JOINT),
            space_axis=Axis.JOINT,
            space_offset=num_sources,
            time_axis=query_axis(Axis.TIME),
            key_time_axis=Axis.TIME,
        )


class SeparableSABlock(nn.Module):
    def __init__(self, cfg: AttentionConfig):
        super().__init__()
        self.audio_time = SelfAttentionBlock(cfg, (Axis.TIME,))
        self.video_time = SelfAttentionBlock(cfg, (Axis.TIME,))
        self.joint = SelfAttentionBlock(cfg, (Axis.JOINT,))

    def forward(self, a: FeatureTensor, v: FeatureTensor) -> Tuple[FeatureTensor, FeatureTensor]:
        z = self.joint(_joint(self.audio_time(a), self.video_time(v)))
        a_out, v_out = _split(z, a.size(Axis.SRC))
        return a_out.permute(a.axes), v_out.permute(v.axes)


class SeparableSAEncoder(AudioVisualEncoder):
    variant = AttentionVariant.SEP_SA

    def __init__(self, cfg: AttentionConfig):
        super().__init__(cfg)
        self.blocks = nn.ModuleList([SeparableSABlock(cfg) for _ in range(cfg.num_blocks)])

    def encode(self, z_a: FeatureTensor, z_v: FeatureTensor) -> FeatureTensor:
        a, v = z_a, z_v
        for block in self.blocks:
            a, v = block(a, v)
        return a

    def map_source(self) -> MultiHeadAttention:
        return self.blocks[-1].joint.mha

    def _describe_map(self, weights: FeatureTensor, num_sources: int) -> AttentionMap:
        return AttentionMap(
            weights=weights,
            attend_axes=(Axis.JOINT,),
            num_sources=num_sources,
            source_axis=query_axis(Axis.JOINT),
            space_axis=Axis.JOINT,
            space_offset=num_sources,
            time_axis=Axis.TIME,
        )


class JointCMAEncoder(AudioVisualEncoder):
    variant = AttentionVariant.JOINT_CMA

    def __init__(self, cfg: AttentionConfig):
        super().__init__(cfg)
        self.blocks = nn.ModuleList([JointCMABlock(cfg) for _ in range(cfg.num_blocks)])

    def encode(self, z_a: FeatureTensor, z_v: FeatureTensor) -> FeatureTensor:
        a, v = z_a, z_v
        for block in self.blocks:
            a, v = block(a, v)
        return a

    def map_source(self) -> MultiHeadAttention:
        return self.blocks[-1].audio.mha

    def _describe_map(self, weights: FeatureTensor, num_sources: int) -> AttentionMap:
        return AttentionMap(
            weights=weights,
            attend_axes=(Axis.SPACE, Axis.TIME),
            num_sources=num_sources,
            source_axis=Axis.SRC,
            space_axis=Axis.SPACE,
            space_offset=0,
            time_axis=query_axis(Axis.TIME),
            key_time_axis=Axis.TIME,
        )


class SeparableCMAEncoder(AudioVisualEncoder):
    variant = AttentionVariant.SEP_CMA

    def __init__(self, cfg: AttentionConfig):
        super().__init__(cfg)
        self.blocks = nn.ModuleList([SeparableCMABlock(cfg) for _ in range(cfg.num_blocks)])

    def encode(self, z_a: FeatureTensor, z_v: FeatureTensor) -> FeatureTensor:
        a, v = z_a, z_v
        for block in self.blocks:
            a, v = block(a, v)
        return a

    def map_source(self) -> MultiHeadAttention:
        return self.blocks[-1].audio.mha

    def _describe_map(self, weights: FeatureTensor, num_sources: int) -> AttentionMap:
        return AttentionMap(
            weights=weights,
            attend_axes=(Axis.SPACE,),
            num_sources=num_sources,
            source_axis=Axis.SRC,
            space_axis=Axis.SPACE,
            space_offset=0,
            time_axis=Axis.TIME,
        )


class ShallowAttentionEncoder(AudioVisualEncoder):
    """
    Baseline spatio-temporal attention: every source embedding attends over the
    spatial grid of its own frame only. Cost grows as T*M*G.
    """
    variant = AttentionVariant.SHALLOW

    def __init__(self, cfg: AttentionConfig):
        super().__init__(cfg)
        self.blocks = nn.ModuleList([CrossModalUpdate(cfg, (Axis.SPACE,)) for _ in range(cfg.num_blocks)])

    def encode(self, z_a: FeatureTensor, z_v: FeatureTensor) -> FeatureTensor:
        a = z_a
        for block in self.blocks:
            a = block(a, z_v)
        return a

    def map_source(self) -> MultiHeadAttention:
        return self.blocks[-1].mha

    def _describe_map(self, weights: FeatureTensor, num_sources: int) -> AttentionMap:
        return AttentionMap(
            weights=weights,
            attend_axes=(Axis.SPACE,),
            num_sources=num_sources,
            source_axis=Axis.SRC,
            space_axis=Axis.SPACE,
            space_offset=0,
            time_axis=Axis.TIME,
        )


ENCODERS = {
    AttentionVariant.JOINT_SA: JointSAEncoder,
    AttentionVariant.SEP_SA: SeparableSAEncoder,
    AttentionVariant.JOINT_CMA: JointCMAEncoder,
    AttentionVariant.SEP_CMA: SeparableCMAEncoder,
    AttentionVariant.SHALLOW: ShallowAttentionEncoder,
}


def build_encoder(cfg: AttentionConfig) -> AudioVisualEncoder:
    encoder = ENCODERS[cfg.variant](cfg)
    logger.info(
        f"Built {cfg.variant.value} encoder: H={cfg.num_heads}, D={cfg.depth}, L={cfg.num_blocks}, "
        f"{sum(p.numel() for p in encoder.parameters())} parameters"
    )
    return encoder


def joint_sa_encode(z_a: FeatureTensor, z_v: FeatureTensor, encoder: JointSAEncoder) -> FeatureTensor:
    return encoder(z_a, z_v)


def separable_sa_encode(z_a: FeatureTensor, z_v: FeatureTensor, encoder: SeparableSAEncoder) -> FeatureTensor:
    return encoder(z_a, z_v)
