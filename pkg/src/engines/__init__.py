"""Calibration, sensitivity and error-surface engines"""
