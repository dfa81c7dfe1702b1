import math

import numpy as np
import pytest
import torch

from audioscope.exceptions import ConfigException, ContractException, DimensionException
from audioscope.models.configs import AttentionConfig, AttentionVariant
from audioscope.networks.attention import (
    BLOCK_TAG,
    POOL_TAG,
    Attention,
    AttentionalPooling,
    JointCMABlock,
    MultiHeadAttention,
    ScoreCounter,
    SelfAttentionBlock,
    SeparableCMABlock,
    attend,
    attentional_pool,
    build_encoder,
    joint_cma_block,
    joint_sa_encode,
    multi_head_attention,
    sa_block,
    separable_cma_block,
    separable_sa_encode,
)
from audioscope.numerics.tensor import LAYER_NORM_EPS, Axis, FeatureTensor, query_axis
from audioscope.services.benchmark_service import score_pairs
from audioscope.services.gradient_audit_service import audit, require_passing

M, G, T, D = 2, 4, 3, 8

VARIANTS = list(AttentionVariant)


def _encoder(variant, heads=2, blocks=2):
    torch.manual_seed(0)
    cfg = AttentionConfig(num_heads=heads, depth=D, num_blocks=blocks, dropout_rate=0.0, variant=variant)
    return build_encoder(cfg).double().eval()


def _features(seed=0, batch=None):
    generator = torch.Generator().manual_seed(seed)
    lead = () if batch is None else (batch,)
    lead_axes = () if batch is None else (Axis.BATCH,)
    z_a = torch.randn(*lead, M, T, D, generator=generator, dtype=torch.float64)
    z_v = torch.randn(*lead, G, T, D, generator=generator, dtype=torch.float64)
    return (FeatureTensor(z_a, lead_axes + (Axis.SRC, Axis.TIME, Axis.DEPTH)),
            FeatureTensor(z_v, lead_axes + (Axis.SPACE, Axis.TIME, Axis.DEPTH)))


class TestAttentionPrimitive:
    def test_weights_normalize_over_attended_axes(self):
        torch.manual_seed(0)
        attention = Attention(D).double()
        z_a, z_v = _features()
        out, weights = attention(z_a, z_v, z_v, (Axis.SPACE, Axis.TIME))
        assert out.axes == z_a.axes
        assert weights.has(query_axis(Axis.TIME))
        total = weights.sum([Axis.SPACE, Axis.TIME]).data
        np.testing.assert_allclose(total.detach().numpy(), 1.0, atol=1e-12)

    def test_missing_attended_axis(self):
        z_a, z_v = _features()
        with pytest.raises(ContractException):
            Attention(D).double()(z_a, z_v, z_v, (Axis.SRC,))

    def test_heads_must_divide_depth(self):
        with pytest.raises(ConfigException):
            MultiHeadAttention(D, 3)
        with pytest.raises(ConfigException):
            AttentionConfig(num_heads=3, depth=D)

    def test_attend_matches_primitive(self):
        torch.manual_seed(0)
        attention = Attention(D).double()
        z_a, z_v = _features()
        expected, _ = attention(z_a, z_v, z_v, (Axis.SPACE,))
        out = attend(z_a, z_v, z_v, (Axis.SPACE,), attention)
        assert torch.equal(out.data, expected.data)

    def test_multi_head_weights_carry_heads(self):
        torch.manual_seed(0)
        mha = MultiHeadAttention(D, 2).double()
        z_a, z_v = _features()
        out, weights = multi_head_attention(z_a, z_v, (Axis.SPACE, Axis.TIME), mha)
        assert out.axes == z_a.axes
        assert weights.size(Axis.HEAD) == 2


def _affine(x, layer, head=None):
    weight = layer.weight if head is None else layer.weight[head]
    bias = layer.bias if head is None else layer.bias[head]
    return x @ weight + bias


def _normalize(x, norm=None):
    out = (x - x.mean(dim=-1, keepdim=True)) / torch.sqrt(x.var(dim=-1, unbiased=False, keepdim=True) + LAYER_NORM_EPS)
    return out if norm is None else out * norm.scale + norm.shift


def _single_head(mha, head):
    attention = Attention(D, head_depth=D // mha.num_heads).double()
    with torch.no_grad():
        for name in ("query", "key", "value"):
            getattr(attention, name).weight.copy_(getattr(mha.attention, name).weight[head])
            getattr(attention, name).bias.copy_(getattr(mha.attention, name).bias[head])
    return attention


class TestReferenceValues:
    def test_joint_attention_matches_loop(self):
        torch.manual_seed(0)
        attention = Attention(D).double()
        z_a, z_v = _features()
        out, weights = attention(z_a, z_v, z_v, (Axis.SPACE, Axis.TIME))
        q, k, v = (_affine(x.data, layer) for x, layer in
                   ((z_a, attention.query), (z_v, attention.key), (z_v, attention.value)))
        w = weights.permute([Axis.SRC, query_axis(Axis.TIME), Axis.SPACE, Axis.TIME]).data
        for m in range(M):
            for t in range(T):
                scores = torch.einsum("d,gsd->gs", q[m, t], k) / math.sqrt(D)
                expected = torch.softmax(scores.flatten(), 0).reshape(G, T)
                torch.testing.assert_close(w[m, t], expected)
                torch.testing.assert_close(out.data[m, t], torch.einsum("gs,gsd->d", expected, v))

    def test_aligned_attention_matches_einsum(self):
        torch.manual_seed(1)
        attention = Attention(D).double()
        z_a, z_v = _features(seed=3)
        out, weights = attention(z_a, z_v, z_v, (Axis.SPACE,))
        q, k, v = (_affine(x.data, layer) for x, layer in
                   ((z_a, attention.query), (z_v, attention.key), (z_v, attention.value)))
        expected = torch.softmax(torch.einsum("mtd,gtd->mtg", q, k) / math.sqrt(D), dim=-1)
        torch.testing.assert_close(weights.permute([Axis.SRC, Axis.TIME, Axis.SPACE]).data, expected)
        torch.testing.assert_close(out.data, torch.einsum("mtg,gtd->mtd", expected, v))

    def test_two_heads_from_single_head_calls(self):
        torch.manual_seed(0)
        mha = MultiHeadAttention(D, 2).double()
        z_a, z_v = _features(seed=4)
        axes = (Axis.SPACE, Axis.TIME)
        out, _ = mha(z_a, z_v, axes)
        heads = [attend(z_a, z_v, z_v, axes, _single_head(mha, h)).data for h in range(2)]
        expected = _affine(torch.cat(heads, dim=-1), mha.output)
        torch.testing.assert_close(out.data, expected)

    def test_single_head_is_attend_then_output(self):
        torch.manual_seed(2)
        mha = MultiHeadAttention(D, 1).double()
        z_a, z_v = _features(seed=5)
        out, _ = multi_head_attention(z_a, z_v, (Axis.SPACE,), mha)
        head = attend(z_a, z_v, z_v, (Axis.SPACE,), _single_head(mha, 0))
        torch.testing.assert_close(out.data, _affine(head.data, mha.output))

    @pytest.mark.parametrize("heads", [1, 2, 4])
    def test_projections_are_applied_once(self, heads):
        mha = MultiHeadAttention(D, heads)
        # three per-head maps D -> D/H plus the output layer
        assert sum(p.numel() for p in mha.parameters()) == 4 * (D * D + D)

    def test_single_pair_joint_block_by_hand(self):
        torch.manual_seed(0)
        cfg = AttentionConfig(num_heads=1, depth=D, num_blocks=1, dropout_rate=0.0, variant=AttentionVariant.JOINT_CMA)
        block = JointCMABlock(cfg).double().eval()
        with torch.no_grad():
            for norm in (block.audio.inner_norm, block.audio.outer_norm, block.video.inner_norm, block.video.outer_norm):
                norm.scale.uniform_(0.5, 1.5)
                norm.shift.uniform_(-0.5, 0.5)
        generator = torch.Generator().manual_seed(7)
        a = torch.randn(1, 1, D, generator=generator, dtype=torch.float64)
        v = torch.randn(1, 1, D, generator=generator, dtype=torch.float64)
        a_out, v_out = joint_cma_block(FeatureTensor(a, (Axis.SRC, Axis.TIME, Axis.DEPTH)),
                                       FeatureTensor(v, (Axis.SPACE, Axis.TIME, Axis.DEPTH)), block)

        def update(x, context, side):
            # a single key takes all the weight
            a1 = _affine(_affine(context, side.mha.attention.value, 0), side.mha.output)
            a2 = _normalize(a1 + x, side.inner_norm)
            return _normalize(_affine(a2, side.dense) + x, side.outer_norm)

        torch.testing.assert_close(a_out.data[0, 0], update(a[0, 0], v[0, 0], block.audio))
        torch.testing.assert_close(v_out.data[0, 0], update(v[0, 0], a[0, 0], block.video))

    def test_zero_residual_sa_block_is_layer_norm(self):
        torch.manual_seed(0)
        block = SelfAttentionBlock(AttentionConfig(num_heads=2, depth=D, num_blocks=1, dropout_rate=0.0),
                                   (Axis.TIME,)).double().eval()
        with torch.no_grad():
            for layer in (block.mha.output, block.dense):
                layer.weight.zero_()
                layer.bias.zero_()
        z_a, _ = _features(seed=6)
        torch.testing.assert_close(sa_block(z_a, block).data, _normalize(z_a.data))


class TestCrossModalBlocks:
    def _block(self, block_cls, variant):
        torch.manual_seed(0)
        cfg = AttentionConfig(num_heads=2, depth=D, num_blocks=1, dropout_rate=0.0, variant=variant)
        return block_cls(cfg).double().eval()

    def test_joint_block_keeps_shapes(self):
        z_a, z_v = _features()
        a_out, v_out = joint_cma_block(z_a, z_v, self._block(JointCMABlock, AttentionVariant.JOINT_CMA))
        assert a_out.axes == z_a.axes and tuple(a_out.data.shape) == (M, T, D)
        assert v_out.axes == z_v.axes and tuple(v_out.data.shape) == (G, T, D)

    def test_joint_block_audio_reads_video(self):
        block = self._block(JointCMABlock, AttentionVariant.JOINT_CMA)
        z_a, z_v = _features()
        _, z_v_other = _features(seed=1)
        first, _ = joint_cma_block(z_a, z_v, block)
        second, _ = joint_cma_block(z_a, z_v_other, block)
        assert not torch.allclose(first.data, second.data)

    def test_separable_block_keeps_shapes(self):
        z_a, z_v = _features()
        a_out, v_out = separable_cma_block(z_a, z_v, self._block(SeparableCMABlock, AttentionVariant.SEP_CMA))
        assert tuple(a_out.data.shape) == (M, T, D)
        assert tuple(v_out.data.shape) == (G, T, D)
        assert torch.isfinite(a_out.data).all() and torch.isfinite(v_out.data).all()


class TestSelfAttentionAndPooling:
    def _cfg(self):
        torch.manual_seed(0)
        return AttentionConfig(num_heads=2, depth=D, num_blocks=1, dropout_rate=0.0)

    def test_sa_block_keeps_axes(self):
        block = SelfAttentionBlock(self._cfg(), (Axis.TIME,)).double().eval()
        z_a, _ = _features()
        out = sa_block(z_a, block)
        assert out.axes == z_a.axes
        assert tuple(out.data.shape) == (M, T, D)

    def test_pool_drops_time(self):
        pooling = AttentionalPooling(self._cfg()).double().eval()
        z_a, _ = _features()
        pooled = attentional_pool(z_a, pooling)
        assert not pooled.has(Axis.TIME)
        assert pooled.size(Axis.SRC) == M and pooled.size(Axis.DEPTH) == D

    def test_pool_ignores_frame_order(self):
        pooling = AttentionalPooling(self._cfg()).double().eval()
        z_a, _ = _features()
        order = torch.tensor([2, 0, 1])
        shuffled = z_a.with_data(z_a.data[:, order])
        torch.testing.assert_close(attentional_pool(z_a, pooling).data, attentional_pool(shuffled, pooling).data)

    def test_encode_functions_match_modules(self):
        z_a, z_v = _features()
        joint = _encoder(AttentionVariant.JOINT_SA)
        separable = _encoder(AttentionVariant.SEP_SA)
        assert torch.equal(joint_sa_encode(z_a, z_v, joint).data, joint(z_a, z_v).data)
        assert torch.equal(separable_sa_encode(z_a, z_v, separable).data, separable(z_a, z_v).data)


@pytest.mark.parametrize("variant", VARIANTS, ids=lambda v: v.value)
class TestEncoders:
    def test_output_has_one_embedding_per_source(self, variant):
        z_a, z_v = _features()
        z = _encoder(variant)(z_a, z_v)
        assert z.axes == (Axis.SRC, Axis.DEPTH)
        assert z.shape == {Axis.SRC: M, Axis.DEPTH: D}

    def test_batched_matches_unbatched(self, variant):
        encoder = _encoder(variant)
        z_a, z_v = _features(batch=2)
        batched = encoder(z_a, z_v).permute([Axis.BATCH, Axis.SRC, Axis.DEPTH]).data
        for b in range(2):
            single = encoder(z_a.narrow(Axis.BATCH, b, 1).sum([Axis.BATCH]),
                             z_v.narrow(Axis.BATCH, b, 1).sum([Axis.BATCH]))
            np.testing.assert_allclose(batched[b].detach().numpy(), single.data.detach().numpy(), atol=1e-10)

    def test_source_permutation_equivariance(self, variant):
        encoder = _encoder(variant)
        z_a, z_v = _features(seed=1)
        order = torch.tensor([1, 0])
        base = encoder(z_a, z_v).data
        permuted = encoder(z_a.with_data(z_a.data[order]), z_v).data
        np.testing.assert_allclose(permuted.detach().numpy(), base[order].detach().numpy(), atol=1e-10)

    def test_time_permutation_invariance(self, variant):
        encoder = _encoder(variant)
        z_a, z_v = _features(seed=2)
        order = torch.tensor([2, 0, 1])
        base = encoder(z_a, z_v).data
        shuffled = encoder(z_a.with_data(z_a.data[:, order]), z_v.with_data(z_v.data[:, order])).data
        np.testing.assert_allclose(shuffled.detach().numpy(), base.detach().numpy(), atol=1e-10)

    def test_score_pairs_match_counter(self, variant):
        encoder = _encoder(variant, blocks=2)
        z_a, z_v = _features(batch=3)
        with ScoreCounter() as counter:
            encoder(z_a, z_v)
        assert counter.pairs[POOL_TAG] == M * T
        assert counter.pairs[BLOCK_TAG] + counter.pairs[POOL_TAG] == score_pairs(variant, M, G, T, 2)

    def test_time_mismatch(self, variant):
        z_a, _ = _features()
        z_v = FeatureTensor(torch.zeros(G, T + 1, D, dtype=torch.float64), (Axis.SPACE, Axis.TIME, Axis.DEPTH))
        with pytest.raises(DimensionException):
            _encoder(variant)(z_a, z_v)

    def test_attention_map_is_spatial(self, variant):
        encoder = _encoder(variant)
        encoder.capture_maps()
        z_a, z_v = _features()
        encoder(z_a, z_v)
        spatial = encoder.attention_map(M).spatial()
        assert spatial.shape == (T, M, G)
        assert (spatial >= 0).all()

    def test_gradient_audit(self, variant):
        report = require_passing(audit("attention", variant))
        assert report.max_error < 1e-4


class TestAttentionMaps:
    def test_uniform_keys_give_uniform_map(self):
        encoder = _encoder(AttentionVariant.JOINT_CMA, heads=1, blocks=1)
        mha = encoder.map_source()
        with torch.no_grad():
            for p in mha.attention.key.parameters():
                p.zero_()
        encoder.capture_maps()
        z_a, z_v = _features()
        encoder(z_a, z_v)
        np.testing.assert_allclose(encoder.attention_map(M).spatial(), 1.0 / G, atol=1e-12)

    def test_map_needs_capture(self):
        encoder = _encoder(AttentionVariant.SEP_CMA)
        z_a, z_v = _features()
        encoder(z_a, z_v)
        with pytest.raises(ContractException):
            encoder.attention_map(M)


class TestOtherAudits:
    @pytest.mark.parametrize("module", ["separator", "embedders", "classifier"])
    def test_gradient_audit(self, module):
        assert audit(module).passed

    def test_unknown_module(self):
        with pytest.raises(ConfigException):
            audit("decoder")
