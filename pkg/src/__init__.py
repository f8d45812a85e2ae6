"""
Source package for the GPS-GSM vehicle tracker.
"""
