"""Test suite for homodefect"""
