"""
Reporting helpers (HTML).
"""
