"""Numerics of the E/I conductance rhythm model: field, integration, walk, spectra, canards."""
