import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'qrfsim.settings')
django.setup()
