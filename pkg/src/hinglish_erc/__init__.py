"""Emotion recognition in code-mixed conversations."""
