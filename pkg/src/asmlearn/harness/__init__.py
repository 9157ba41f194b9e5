"""Experiment orchestration, MNIST feature pipelines and the command line."""
