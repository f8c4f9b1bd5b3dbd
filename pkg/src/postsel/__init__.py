"""Post-selection maximum likelihood inference."""
