"""
facestab - Test Suite
"""
