#!/usr/bin/env python3
"""Regenerate the shipped safe-zone meshes under src/tdcr_mpc/data/meshes."""

from pathlib import Path

from tdcr_mpc.meshes import generate_builtin_meshes

if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "tdcr_mpc" / "data" / "meshes"
    for f in generate_builtin_meshes(out):
        print(f)
