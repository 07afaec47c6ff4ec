"""Analysis and simulation of threshold-ALOHA."""
