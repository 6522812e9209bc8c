"""
WAVECAL
Robust evolutionary calibration of wave models under forcing uncertainty
"""

__version__ = "1.0.0"
