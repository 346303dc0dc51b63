"""Pydantic data models shared by the services."""
