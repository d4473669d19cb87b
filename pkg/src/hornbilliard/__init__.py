"""Billiards with Torricelli-trumpet horns: excursions, maps, derivatives and limit laws."""

__version__ = "0.1.0"
