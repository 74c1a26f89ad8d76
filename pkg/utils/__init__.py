"""Output path helpers shared by the CLI and the scripts."""
