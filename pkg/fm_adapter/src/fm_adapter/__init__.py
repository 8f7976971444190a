"""Stdio adapter exposing pretrained time-series models behind a simple
line-delimited JSON forecast protocol."""

__version__ = "0.1.0"
