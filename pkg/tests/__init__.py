"""Unit test package for peerqml."""
