"""moldistill: multimodal teacher distillation for molecular property prediction.

Parse SMILES into molecular graphs, query a vision-capable chat model for
per-molecule analyses, pretrain a graph-convolutional teacher, and distill
both teachers into a small MLP that predicts properties from atom features
alone.
"""

__version__ = "0.1.0"
