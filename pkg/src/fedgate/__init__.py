"""fedgate: federated access-control broker and HDFS-federation simulator."""

__version__ = "0.1.0"
