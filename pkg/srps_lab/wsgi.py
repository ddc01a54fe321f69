"""
WSGI config for srps_lab project.

Serves the admin for browsing experiment records.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'srps_lab.settings')

application = get_wsgi_application()
