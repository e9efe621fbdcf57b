"""Model-in-the-loop annotation platform.

LLMs participate in three roles around a human labeling workflow:
pre-annotation of classification questions, real-time draft assistance for
open-ended responses, and rubric-driven judging of submitted annotations, with
queueing, QA gating, export, and the metrics to evaluate all of it.
"""

__version__ = "0.1.0"
