"""UAV photovoltaic inspection pipeline: thermal preprocessing, palette-
invariant fusion math, adaptive re-acquisition, geo-projection, haversine-
DBSCAN de-duplication, relevance-only telemetry, and a mission simulator."""

__version__ = "0.1.0"
