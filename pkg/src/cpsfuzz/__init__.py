"""Active fuzzing testbench for a simulated water-treatment plant."""

__version__ = "0.1.0"
