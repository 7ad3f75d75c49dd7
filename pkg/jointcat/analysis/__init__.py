"""Model evaluation, variable importance and posterior summaries."""
