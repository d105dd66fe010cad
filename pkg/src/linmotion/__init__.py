"""Linear-attention motion-residual video diffusion toolkit at desk scale."""

__version__ = "0.1.0"
