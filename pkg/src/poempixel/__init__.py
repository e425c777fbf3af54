"""Poem-to-image pipeline: summarize, extract key elements, write diffusion
instructions, generate and score images, and tune prompts from feedback."""

__version__ = "0.1.0"
