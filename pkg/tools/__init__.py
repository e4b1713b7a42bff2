"""Formula, geometry, measures, sequences, box counting and the Cantor construction."""
