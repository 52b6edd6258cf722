"""
URL configuration for the hfisim project.
"""
from django.contrib import admin
from django.urls import path, include


urlpatterns = [
    path('admin/', admin.site.urls),
    path('api/', include('api.urls')),
    path('experiments/', include('experiments.urls')),
]

# Admin site customization
admin.site.site_header = "hfisim Administration"
admin.site.site_title = "hfisim Admin Portal"
admin.site.index_title = "Simulation runs"
