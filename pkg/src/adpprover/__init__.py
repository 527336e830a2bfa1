"""Automated prover for almost-sure termination of probabilistic term
rewrite systems, with an empirical simulator for cross-checks."""

from .prover import Goal, ProverConfig, Verdict, prove, render_proof

__all__ = ["Goal", "ProverConfig", "Verdict", "prove", "render_proof"]
