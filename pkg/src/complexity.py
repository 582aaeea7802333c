"""Analytic parameter, MAC and FLOP counts for one batch element"""
import math
from typing import Tuple

from .schemas import ComplexityReport, ComplexityRow, ModelConfig


def count_linear(f_in: int, f_out: int, n_tokens: int = 1, bias: bool = True) -> Tuple[int, int]:
    """(params, MACs) of a dense layer applied to `n_tokens` tokens"""
    params = f_in * f_out + (f_out if bias else 0)
    return params, n_tokens * f_in * f_out


def count_mamba(config: ModelConfig, d_model: int, length: int) -> Tuple[int, int]:
    """One stack of Mamba blocks over a sequence of `length` tokens"""
    inner = config.expand * d_model
    rank = math.ceil(d_model / 16)
    state = config.state_size
    width = config.conv_width
    layers = [
        count_linear(d_model, 2 * inner, length),
        count_linear(inner, rank + 2 * state, length, bias=False),
        count_linear(rank, inner, length),
        count_linear(inner, d_model, length),
    ]
    params = sum(p for p, _ in layers)
    macs = sum(m for _, m in layers)
    if width:
        params += inner * width + inner
        macs += length * inner * width
    # A_log and D
    params += inner * state + inner
    # state update, input injection and readout per slot; D skip and gate per channel
    macs += length * inner * state * 3 + length * inner * 2
    return params * config.mamba_depth, macs * config.mamba_depth


def _scorer(config: ModelConfig, features: int, tokens: int) -> Tuple[int, int]:
    width = config.heads * config.d_k
    params = 2 * features * width
    return params, 2 * tokens * features * width + tokens * width


def _row(module: str, params: int, macs: int) -> ComplexityRow:
    return ComplexityRow(module=module, params=params, macs=macs, flops=2 * macs)


def count_complexity(config: ModelConfig, batch_size: int = 64) -> ComplexityReport:
    """
    Per-module counts mirroring `GDSMamba` construction.

    Args:
        config (ModelConfig): architecture to count.
        batch_size (int): batch size used for the graph propagation term.

    Returns:
        ComplexityReport: rows for each branch, graph, fusion and head plus the total.
    """
    pixels = config.pixels
    budgets = config.budgets()
    fusion_width = config.fusion_width
    rows = []

    def branch(name, tokenizer, scorer, features, budget, per_pixel):
        repeat = pixels if per_pixel else 1
        mamba = count_mamba(config, features, budget)
        proj = count_linear(features, fusion_width)
        params = tokenizer[0] + scorer[0] + mamba[0] + proj[0]
        macs = tokenizer[1] + repeat * (scorer[1] + mamba[1]) + proj[1]
        rows.append(_row(name, params, macs))

    steps, bands, channels, width = config.T, config.C0, config.C, config.d
    spatial_tokenizer = count_linear(steps * bands, width, pixels)
    cosine = (0, pixels * width * 3)
    if config.disentangle:
        if config.use_spectral:
            stem = (steps * channels * bands + steps * channels, pixels * steps * channels * bands)
            branch("spectral", stem, _scorer(config, steps, channels), steps, budgets["k_F"], True)
        if config.use_temporal:
            tokenizer = count_linear(bands, channels, pixels * steps)
            branch("temporal", tokenizer, _scorer(config, channels, steps), channels, budgets["k_T"], True)
        if config.use_spatial:
            branch("spatial", spatial_tokenizer, cosine, width, budgets["k_s"], False)
    else:
        branch("joint", spatial_tokenizer, cosine, width, budgets["k_s"], False)

    gcn_params, gcn_macs = 0, 0
    widths = [pixels * steps * bands] + [config.gcn_width] * config.gcn_depth
    for f_in, f_out in zip(widths[:-1], widths[1:]):
        params, macs = count_linear(f_in, f_out)
        gcn_params += params + 2 * f_out
        gcn_macs += macs + batch_size * f_out + f_out
    rows.append(_row("graph", gcn_params, gcn_macs))

    fused_in = fusion_width * (len(rows) - 1) + config.gcn_width
    rows.append(_row("fusion", *count_linear(fused_in, fusion_width)))
    rows.append(_row("head", *count_linear(fusion_width, config.K)))

    total = _row("total", sum(row.params for row in rows), sum(row.macs for row in rows))
    return ComplexityReport(rows=rows, total=total)
