"""Domain components: events, EBBI stack, SNN engine, trainer, baselines, metrics, hardware model."""
