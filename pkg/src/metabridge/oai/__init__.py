"""OAI-PMH 2.0: shared vocabulary (core), harvester (client), data provider."""
