"""Test suite."""


