"""Logging, run sessions, file formats and the synthetic domain"""
