"""HTTP service exposing planning, analysis and model materialisation."""
