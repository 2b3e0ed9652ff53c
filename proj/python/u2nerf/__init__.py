"""Underwater neural radiance field decomposition (C++ core)."""

from ._core import (
    Error,
    compose,
    l_rec,
    l_con,
    l_col,
    l_kl,
    l_trans,
    l_glob,
    total_loss,
    psnr,
    ssim,
    uicm,
    uiqm,
    uciqe,
    synthesize_underwater,
    make_toy_scene,
    write_toy_scene,
    train,
    render,
)

__all__ = [
    "Error",
    "compose",
    "l_rec",
    "l_con",
    "l_col",
    "l_kl",
    "l_trans",
    "l_glob",
    "total_loss",
    "psnr",
    "ssim",
    "uicm",
    "uiqm",
    "uciqe",
    "synthesize_underwater",
    "make_toy_scene",
    "write_toy_scene",
    "train",
    "render",
]
